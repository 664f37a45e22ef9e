"""On-disk formats: edge/feature/label/split files and parameter checkpoints.

Edge file    UTF-8 text, one edge per line as two whitespace-separated node
             ids; lines starting with '#' are ignored.
Feature file binary: magic "SSGFEAT1", little-endian u64 N, u64 F, then
             N*F little-endian f32 values row-major.
Label file   UTF-8 text, one integer per line (N lines, -1 = unlabeled).
Split file   UTF-8 text, one of train/val/test/none per line (optional).
Checkpoint   binary: magic "SSGCKPT1", u64 entry count, then per entry:
             u64 name length, UTF-8 name, u64 rank, u64 dims, f32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ShapeError
from .graphs import Dataset, Graph, SplitMask, graph_from_arcs, random_split

FEATURE_MAGIC = b"SSGFEAT1"
CKPT_MAGIC = b"SSGCKPT1"


def write_features(path, features: np.ndarray):
    arr = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FEATURE_MAGIC:
            raise DataFormatError(f"bad feature-file magic {magic!r}", path=path)
        header = fh.read(16)
        if len(header) != 16:
            raise DataFormatError("truncated feature-file header", path=path)
        n, f = struct.unpack("<QQ", header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != n * f:
        raise DataFormatError(f"expected {n * f} feature values, found {data.size}", path=path)
    return data.reshape(n, f).astype(np.float32)


def read_edges(path, num_nodes: int) -> Graph:
    path = str(path)
    src, dst = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise DataFormatError(f"expected two node ids, got {stripped!r}", path=path, line=lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataFormatError(f"non-integer node id in {stripped!r}", path=path, line=lineno) from None
            if i < 0 or j < 0 or i >= num_nodes or j >= num_nodes:
                raise DataFormatError(f"node id out of range [0, {num_nodes}) in {stripped!r}",
                                      path=path, line=lineno)
            src.append(i)
            dst.append(j)
    return graph_from_arcs(num_nodes, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64))


def write_edges(path, graph: Graph):
    """Writes each undirected edge once (src < dst)."""
    edges = graph.undirected_edges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src dst\n")
        for i, j in edges:
            fh.write(f"{i} {j}\n")


def read_labels(path, num_nodes: int) -> np.ndarray:
    path = str(path)
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                labels.append(int(stripped))
            except ValueError:
                raise DataFormatError(f"non-integer label {stripped!r}", path=path, line=lineno) from None
    if len(labels) != num_nodes:
        raise ShapeError(f"{path}: {len(labels)} labels for {num_nodes} nodes")
    return np.asarray(labels, dtype=np.int64)


def write_labels(path, labels: np.ndarray):
    with open(path, "w", encoding="utf-8") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")


_SPLIT_NAMES = ("train", "val", "test", "none")


def read_splits(path, num_nodes: int) -> SplitMask:
    path = str(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped not in _SPLIT_NAMES:
                raise DataFormatError(f"split entry must be one of {_SPLIT_NAMES}, got {stripped!r}",
                                      path=path, line=lineno)
            rows.append(stripped)
    if len(rows) != num_nodes:
        raise ShapeError(f"{path}: {len(rows)} split rows for {num_nodes} nodes")
    arr = np.asarray(rows)
    return SplitMask(train=arr == "train", val=arr == "val", test=arr == "test")


def write_splits(path, splits: SplitMask):
    names = np.full(len(splits.train), "none", dtype=object)
    names[splits.train] = "train"
    names[splits.val] = "val"
    names[splits.test] = "test"
    with open(path, "w", encoding="utf-8") as fh:
        for v in names:
            fh.write(f"{v}\n")


def load_dataset(edge_path, feature_path, label_path, split_path=None) -> Dataset:
    """Assemble a Dataset from the on-disk formats.

    Node count is defined by the feature file; the graph is symmetrized with
    self-loops and duplicate edges dropped. Without a split file a seed-0
    10/10/80 split is attached.
    """
    features = read_features(feature_path)
    n = features.shape[0]
    graph = read_edges(edge_path, n)
    labels = read_labels(label_path, n)
    if split_path is not None:
        splits = read_splits(split_path, n)
    else:
        splits = random_split(n, (0.1, 0.1), seed=0)
    ds = Dataset(graph=graph, features=features, labels=labels, splits=splits)
    ds.validate()
    return ds


def save_dataset(out_dir, dataset: Dataset):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_edges(out / "edges.txt", dataset.graph)
    write_features(out / "features.bin", dataset.features)
    write_labels(out / "labels.txt", dataset.labels)
    write_splits(out / "splits.txt", dataset.splits)
    return out


def load_dataset_dir(data_dir) -> Dataset:
    d = Path(data_dir)
    split = d / "splits.txt"
    return load_dataset(d / "edges.txt", d / "features.bin", d / "labels.txt",
                        split if split.exists() else None)


def write_checkpoint(path, entries: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(entries)))
        for name, arr in entries.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = str(path)
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CKPT_MAGIC:
            raise DataFormatError(f"bad checkpoint magic {magic!r}", path=path)
        (count,) = struct.unpack("<Q", fh.read(8))
        for _ in range(count):
            (name_len,) = struct.unpack("<Q", fh.read(8))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<Q", fh.read(8))
            shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4")
            if data.size != size:
                raise DataFormatError(f"truncated data for entry {name!r}", path=path)
            out[name] = data.reshape(shape).astype(np.float32)
    return out

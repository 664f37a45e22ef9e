"""Graph containers, degree normalization, synthetic data, and splits.

Graphs are immutable CSR adjacency structures storing every directed arc of a
symmetric relation: arc (i -> j) is present iff (j -> i) is. Self-loops are
never stored in ``Graph``; normalization re-adds exactly one per node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class Graph:
    """Symmetric adjacency in CSR form (no self-loops, no duplicate arcs)."""

    num_nodes: int
    row_offsets: np.ndarray   # int64, length N+1
    col_indices: np.ndarray   # int64, length M

    @property
    def num_edges(self) -> int:
        """Directed arc count (twice the undirected edge count)."""
        return int(self.col_indices.shape[0])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[node]:self.row_offsets[node + 1]]

    def undirected_edges(self) -> np.ndarray:
        """(E, 2) array of unique undirected edges with src < dst."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        dst = self.col_indices
        keep = src < dst
        return np.stack([src[keep], dst[keep]], axis=1)

    def validate(self):
        n, ro, ci = self.num_nodes, self.row_offsets, self.col_indices
        if ro[0] != 0 or ro[-1] != len(ci) or np.any(np.diff(ro) < 0):
            raise ShapeError("row_offsets must be monotone from 0 to M")
        if len(ci) and (ci.min() < 0 or ci.max() >= n):
            raise ShapeError("column index out of range")


def graph_from_arcs(num_nodes: int, src: np.ndarray, dst: np.ndarray) -> Graph:
    """Build a symmetric Graph from raw arcs.

    Input arcs are symmetrized (both directions stored), self-loops dropped,
    and duplicates merged.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
        raise ShapeError(f"edge endpoint out of range for {num_nodes} nodes")
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    keep = a != b
    a, b = a[keep], b[keep]
    # Dedup via the flattened arc key; stays exact for num_nodes < 2**31.
    key = np.unique(a * np.int64(num_nodes) + b)
    a, b = key // num_nodes, key % num_nodes
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(row_offsets, a + 1, 1)
    np.cumsum(row_offsets, out=row_offsets)
    return Graph(num_nodes=num_nodes, row_offsets=row_offsets, col_indices=b)


def with_self_loops(graph: Graph) -> tuple[np.ndarray, np.ndarray]:
    """CSR arrays of A + I with each row's self-loop in sorted position."""
    n = graph.num_nodes
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    row_offsets[1:] = np.cumsum(graph.degrees + 1)
    rows = np.concatenate([np.repeat(np.arange(n), graph.degrees), np.arange(n)])
    cols = np.concatenate([graph.col_indices, np.arange(n)])
    order = np.lexsort((cols, rows))
    return row_offsets, cols[order]


@dataclass
class NormalizedGraph:
    """Degree-normalized adjacency with self-loops.

    ``kind`` is "symmetric" (weights 1/sqrt(d_i d_j), the spectral form) or
    "row" (weights 1/d_i, rows sum to one); degrees count the added loop.
    """

    base: Graph
    kind: str
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray
    self_loops_added: bool = True
    _mats: dict = field(default_factory=dict, repr=False)

    def matrix(self, dtype=np.float32) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """scipy CSR matrix and its transpose, cached per dtype."""
        key = np.dtype(dtype).name
        if key not in self._mats:
            n = self.base.num_nodes
            m = sp.csr_matrix(
                (self.weights.astype(dtype), self.col_indices, self.row_offsets),
                shape=(n, n),
            )
            self._mats[key] = (m, m.T.tocsr())
        return self._mats[key]


def normalize(graph: Graph, kind: str) -> NormalizedGraph:
    if kind not in ("symmetric", "row"):
        raise ConfigError(f"unknown normalization kind {kind!r}")
    row_offsets, col_indices = with_self_loops(graph)
    deg_hat = (graph.degrees + 1).astype(np.float64)
    rows = np.repeat(np.arange(graph.num_nodes), np.diff(row_offsets))
    if kind == "symmetric":
        weights = 1.0 / np.sqrt(deg_hat[rows] * deg_hat[col_indices])
    else:
        weights = 1.0 / deg_hat[rows]
    return NormalizedGraph(base=graph, kind=kind, row_offsets=row_offsets,
                           col_indices=col_indices, weights=weights)


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self):
        if (self.train & self.val).any() or (self.train & self.test).any() or (self.val & self.test).any():
            raise ShapeError("split masks must be pairwise disjoint")


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray      # (N, F) float32
    labels: np.ndarray        # (N,) int64, -1 marks unlabeled
    splits: SplitMask

    @property
    def num_classes(self) -> int:
        labeled = self.labels[self.labels >= 0]
        return int(labeled.max()) + 1 if len(labeled) else 0

    def validate(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n:
            raise ShapeError(f"features rows {self.features.shape[0]} != {n} nodes")
        if len(self.labels) != n:
            raise ShapeError(f"labels length {len(self.labels)} != {n} nodes")
        if not np.isfinite(self.features).all():
            raise ShapeError("features must be finite")
        if self.labels.min() < -1:
            raise ShapeError("labels must be >= -1")
        self.splits.validate()


def random_split(n: int, fractions: tuple[float, float], seed: int) -> SplitMask:
    """Deterministic shuffle split: floor-sized train/val, remainder test."""
    f_train, f_val = fractions
    if f_train < 0 or f_val < 0 or f_train + f_val > 1 + 1e-12:
        raise ConfigError(f"bad split fractions {fractions}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    order = rng.permutation(n)
    n_train = int(np.floor(f_train * n))
    n_val = int(np.floor(f_val * n))
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    train[order[:n_train]] = True
    val[order[n_train:n_train + n_val]] = True
    test[order[n_train + n_val:]] = True
    return SplitMask(train=train, val=val, test=test)


SBM_NODE_CAP = 20_000


def generate_sbm(blocks: int, nodes_per_block: int, p_in: float, p_out: float,
                 feature_dim: int, signal: float, seed: int,
                 split_fractions: tuple[float, float] = (0.1, 0.1)) -> Dataset:
    """Stochastic-block-model dataset: block id is the label.

    Features are the block one-hot scaled by ``signal`` plus unit Gaussian
    noise scaled by ``1 - signal``; the default split is 10/10/80.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ConfigError("p_in and p_out must lie in [0, 1]")
    if not (0.0 <= signal <= 1.0):
        raise ConfigError("signal must lie in [0, 1]")
    if feature_dim < blocks:
        raise ConfigError(f"feature_dim {feature_dim} < blocks {blocks}")
    n = blocks * nodes_per_block
    if n > SBM_NODE_CAP:
        raise ConfigError(f"synthetic generator draws all {n}^2/2 node pairs; "
                          f"refusing above {SBM_NODE_CAP} nodes (load a file dataset instead)")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    labels = np.repeat(np.arange(blocks), nodes_per_block).astype(np.int64)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    present = rng.random(len(iu)) < p
    src, dst = iu[present], ju[present]
    graph = graph_from_arcs(n, src, dst)

    onehot = np.zeros((n, feature_dim), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    noise = rng.standard_normal((n, feature_dim))
    features = (signal * onehot + (1.0 - signal) * noise).astype(np.float32)

    splits = random_split(n, split_fractions, seed)
    ds = Dataset(graph=graph, features=features, labels=labels, splits=splits)
    ds.validate()
    return ds

#!/usr/bin/env python3
"""Convert the public WikiCS export (data.json) into this package's dataset
directory format.

The export is the JSON file shipped by the dataset's maintainers with fields
"features" (N x 300), "labels" (N), "links" (per-node neighbor lists), and 20
canonical train/val masks plus a shared test mask. Pick one split with
--split-index, or pass --resplit to attach a fresh 10/10/80 split instead.

No downloading happens here; fetch data.json yourself and point --json at it.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from ssgraph.graphs import Dataset, SplitMask, graph_from_arcs, random_split
from ssgraph.storage import save_dataset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--json", required=True, help="path to the WikiCS data.json export")
    ap.add_argument("--out", required=True, help="output dataset directory")
    ap.add_argument("--split-index", type=int, default=0,
                    help="which of the canonical train/val splits to keep")
    ap.add_argument("--resplit", action="store_true",
                    help="ignore canonical masks; attach a seed-0 10/10/80 split")
    args = ap.parse_args()

    raw = json.loads(Path(args.json).read_text())
    features = np.asarray(raw["features"], dtype=np.float32)
    labels = np.asarray(raw["labels"], dtype=np.int64)
    n = features.shape[0]

    src, dst = [], []
    for i, nbrs in enumerate(raw["links"]):
        for j in nbrs:
            src.append(i)
            dst.append(j)
    graph = graph_from_arcs(n, np.asarray(src), np.asarray(dst))

    if args.resplit:
        splits = random_split(n, (0.1, 0.1), seed=0)
    else:
        train = np.asarray(raw["train_masks"][args.split_index], dtype=bool)
        val = np.asarray(raw["val_masks"][args.split_index], dtype=bool)
        test = np.asarray(raw["test_mask"], dtype=bool)
        # the canonical masks overlap nowhere, but guard anyway
        val &= ~train
        test &= ~(train | val)
        splits = SplitMask(train=train, val=val, test=test)

    ds = Dataset(graph=graph, features=features, labels=labels, splits=splits)
    ds.validate()
    save_dataset(args.out, ds)
    print(f"wrote {args.out}: N={n} M={graph.num_edges} F={features.shape[1]} "
          f"C={ds.num_classes}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

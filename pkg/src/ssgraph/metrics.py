"""Per-step scalar records and the embedding-collapse diagnostics."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricsRecord:
    step: int
    loss: float
    lr: float
    tau: float | None = None
    spread: float | None = None
    norm: float | None = None
    loss_shifted: float | None = None      # 2 + loss, the nonnegative convention
    loss_ce: float | None = None
    loss_aux: float | None = None
    peak_bytes: int | None = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None})


def write_jsonl(path, records: list[MetricsRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def embedding_spread(h: np.ndarray) -> float:
    """Norm of the per-dimension std across nodes, divided by the mean row norm.

    Zero everywhere (including the all-zero degenerate input, with a warning).
    """
    norms = np.linalg.norm(h, axis=1)
    mean_norm = norms.mean()
    if mean_norm == 0.0:
        warnings.warn("embedding_spread of an all-zero matrix is defined as 0")
        return 0.0
    std = h.std(axis=0)
    return float(np.linalg.norm(std) / mean_norm)


def mean_embedding_norm(h: np.ndarray) -> float:
    return float(np.linalg.norm(h, axis=1).mean())

"""Frozen-embedding evaluation and diagnostics.

The linear probe fits an L2-regularized multinomial logistic model on frozen
(row-normalized) embeddings, either with a quasi-Newton solver run to a fixed
gradient tolerance over a fine regularizer grid, or with a fixed 100-step
AdamW budget over a coarser weight-decay grid. The regularizer is chosen on
validation accuracy; no gradient ever reaches the encoder.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import tensor as T
from .augment import identity_view
from .errors import ConfigError
from .graphs import Dataset, SplitMask
from .metrics import embedding_spread, mean_embedding_norm  # noqa: F401  (re-exported)
from .nn import ParamSet, build_encoder
from .optim import AdamWState, adamw_step
from .tensor import Tensor, backward, measure_peak_bytes, no_grad

GRID_FULL = [2.0 ** p for p in range(-10, 11)]
GRID_FAST = [2.0 ** p for p in range(-10, 11, 2)]
ZERO_ROW_EPS = 1e-12


@dataclass
class ProbeConfig:
    mode: str = "grid_full"              # grid_full | gd_fast
    grid: list[float] | None = None      # regularizer (or weight-decay) grid
    gd_steps: int = 100
    gd_lr: float = 0.01

    def resolved_grid(self) -> list[float]:
        if self.grid:
            return list(self.grid)
        return GRID_FULL if self.mode == "grid_full" else GRID_FAST

    def validate(self):
        if self.mode not in ("grid_full", "gd_fast"):
            raise ConfigError(f"unknown probe mode {self.mode!r}")
        if not self.resolved_grid():
            raise ConfigError("probe grid must be nonempty")


def embed_frozen(encoder, params: ParamSet, dataset: Dataset) -> np.ndarray:
    """Eval-mode forward on the unaugmented graph, rows scaled to unit norm."""
    with no_grad():
        h = encoder.forward(params, identity_view(dataset), train=False).data
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    zero_rows = norms[:, 0] <= ZERO_ROW_EPS
    if zero_rows.any():
        warnings.warn(f"{int(zero_rows.sum())} zero embedding rows left unnormalized")
    return (h / np.where(norms > ZERO_ROW_EPS, norms, 1.0)).astype(np.float32)


def _softmax_objective(wb: np.ndarray, x: np.ndarray, y: np.ndarray,
                       num_classes: int, reg: float):
    """Mean cross-entropy + (reg/2)||W||^2 with its analytic gradient."""
    n, d = x.shape
    w = wb[:d * num_classes].reshape(d, num_classes)
    b = wb[d * num_classes:]
    logits = x @ w + b
    logits -= logits.max(axis=1, keepdims=True)
    expz = np.exp(logits)
    z = expz.sum(axis=1)
    probs = expz / z[:, None]
    nll = (np.log(z) - logits[np.arange(n), y]).mean()
    obj = nll + 0.5 * reg * (w * w).sum()
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = x.T @ delta + reg * w
    gb = delta.sum(axis=0)
    return obj, np.concatenate([gw.reshape(-1), gb])


def _fit_logreg_lbfgs(x: np.ndarray, y: np.ndarray, num_classes: int, reg: float) -> tuple[np.ndarray, np.ndarray]:
    d = x.shape[1]
    wb0 = np.zeros(d * num_classes + num_classes)
    res = scipy.optimize.minimize(
        _softmax_objective, wb0, args=(x.astype(np.float64), y, num_classes, reg),
        method="L-BFGS-B", jac=True,
        options={"maxiter": 2000, "gtol": 1e-6, "ftol": 1e-15})
    w = res.x[:d * num_classes].reshape(d, num_classes)
    b = res.x[d * num_classes:]
    return w, b


def _fit_logreg_gd(x: np.ndarray, y: np.ndarray, num_classes: int,
                   weight_decay: float, steps: int, lr: float) -> tuple[np.ndarray, np.ndarray]:
    params = ParamSet()
    params.add("probe.weight", np.zeros((x.shape[1], num_classes), dtype=np.float64))
    params.add("probe.bias", np.zeros(num_classes, dtype=np.float64))
    opt = AdamWState(params)
    xt = Tensor(x.astype(np.float64))
    for _ in range(steps):
        logits = T.add(T.matmul(xt, params["probe.weight"]), params["probe.bias"])
        loss = T.cross_entropy_logits(logits, y)
        backward(loss)
        adamw_step(params, opt, lr, weight_decay)
    return params["probe.weight"].data, params["probe.bias"].data


def _accuracy(w, b, x, y) -> float:
    return float(((x @ w + b).argmax(axis=1) == y).mean())


def linear_probe(embeddings: np.ndarray, labels: np.ndarray, splits: SplitMask,
                 cfg: ProbeConfig | None = None, seed: int = 0) -> dict:
    """Fit the frozen probe, select the regularizer on validation accuracy."""
    cfg = cfg or ProbeConfig()
    cfg.validate()
    del seed  # the fits are deterministic; kept for interface stability
    train_idx = np.flatnonzero(splits.train & (labels >= 0))
    val_idx = np.flatnonzero(splits.val & (labels >= 0))
    test_idx = np.flatnonzero(splits.test & (labels >= 0))
    classes = np.unique(labels[train_idx])
    if len(classes) < 2:
        raise ConfigError(f"linear probe needs >= 2 classes in the train split, got {len(classes)}")
    num_classes = int(labels[labels >= 0].max()) + 1

    best = None
    for reg in cfg.resolved_grid():
        if cfg.mode == "grid_full":
            w, b = _fit_logreg_lbfgs(embeddings[train_idx], labels[train_idx], num_classes, reg)
        else:
            w, b = _fit_logreg_gd(embeddings[train_idx], labels[train_idx], num_classes,
                                  reg, cfg.gd_steps, cfg.gd_lr)
        val_acc = _accuracy(w, b, embeddings[val_idx], labels[val_idx]) if len(val_idx) else 0.0
        if best is None or val_acc > best["val_accuracy"]:
            best = {
                "val_accuracy": val_acc,
                "test_accuracy": _accuracy(w, b, embeddings[test_idx], labels[test_idx]) if len(test_idx) else 0.0,
                "train_accuracy": _accuracy(w, b, embeddings[train_idx], labels[train_idx]),
                "chosen_reg": reg,
                "mode": cfg.mode,
            }
    return best


def random_init_baseline(encoder_config, dataset: Dataset, seed: int,
                         probe_cfg: ProbeConfig | None = None) -> dict:
    """Probe accuracy of an untrained, freshly initialized encoder."""
    encoder = build_encoder(encoder_config, dataset.features.shape[1])
    params = encoder.init_params((seed, 0))
    emb = embed_frozen(encoder, params, dataset)
    return linear_probe(emb, dataset.labels, dataset.splits, probe_cfg, seed)


# ---------------------------------------------------------------------------
# attention diagnostics
# ---------------------------------------------------------------------------

def attention_entropy_values(encoder, params: ParamSet, dataset: Dataset) -> np.ndarray:
    """Per train node: mean over layers and heads of the attention entropy
    minus the entropy of the uniform distribution over its neighborhood."""
    if getattr(encoder, "kind", None) != "gat":
        raise ConfigError("attention entropy requires a gat encoder")
    records: list = []
    with no_grad():
        encoder.forward(params, identity_view(dataset), train=False,
                        record_attention=records)
    n = dataset.graph.num_nodes
    totals = np.zeros(n)
    for rec in records:
        alpha = rec["alpha"]
        row_sizes = np.diff(rec["row_offsets"])
        row_ids = np.repeat(np.arange(n), row_sizes)
        plogp = np.where(alpha > 0, alpha * np.log(alpha), 0.0)
        ent = np.zeros(n)
        np.add.at(ent, row_ids, -plogp)
        totals += ent - np.log(row_sizes)
    values = totals / len(records)
    return values[dataset.splits.train]


def attention_entropy_histogram(encoder, params: ParamSet, dataset: Dataset,
                                bins: int = 40) -> dict:
    values = attention_entropy_values(encoder, params, dataset)
    lo = float(values.min()) if len(values) else -1.0
    counts, edges = np.histogram(values, bins=bins, range=(min(lo, -1e-9), 0.0))
    return {"values": values, "bin_edges": edges, "counts": counts}


# ---------------------------------------------------------------------------
# cost model
# ---------------------------------------------------------------------------

@dataclass
class CostModel:
    c_encoder: float = 1.0
    c_prediction: float = 1.0
    c_projection: float = 1.0
    c_method: float = 1.0

    def validate(self):
        for name in ("c_encoder", "c_prediction", "c_projection", "c_method"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


def predict_cost(method: str, n: int, m: int, model: CostModel) -> float:
    """Per-update-step time/space estimate.

    Four encoder passes plus prediction plus a linear per-node term for the
    bootstrapped method; two encoder passes plus projection plus a quadratic
    all-pairs term for the contrastive one (each backward pass counted as one
    more encoder pass per augmentation).
    """
    model.validate()
    if method == "bgrl":
        return 6.0 * model.c_encoder * (m + n) + 4.0 * model.c_prediction * n + model.c_method * n
    if method == "grace":
        return 4.0 * model.c_encoder * (m + n) + 4.0 * model.c_projection * n + model.c_method * n * n
    raise ConfigError(f"unknown method {method!r} for the cost model")


def measure_peak_activation(step_closure) -> int:
    """Peak concurrently-live tensor-buffer bytes while running the closure."""
    with measure_peak_bytes() as out:
        step_closure()
    return out["peak"]

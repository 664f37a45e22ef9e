"""AdamW with decoupled weight decay, plus the cosine training schedules.

The learning rate ramps linearly over the warmup steps and then follows a
half-cosine down to zero at the final step. The moving-average decay runs on
its own cosine from its base value up to exactly 1 at the final step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .nn import ParamSet

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Decoupled decay never touches norm affine parameters or activation slopes.
_NO_DECAY_SUFFIXES = ("norm_scale", "norm_shift", "prelu")


@dataclass
class ScheduleConfig:
    eta_base: float = 5e-4
    n_total: int = 10_000
    n_warmup: int = 1_000
    tau_base: float = 0.99
    weight_decay: float = 1e-5

    def validate(self):
        if self.eta_base <= 0:
            raise ConfigError(f"eta_base must be positive, got {self.eta_base}")
        if not (0 <= self.n_warmup <= self.n_total):
            raise ConfigError(f"need 0 <= n_warmup <= n_total, got {self.n_warmup}, {self.n_total}")
        if not (0.0 <= self.tau_base <= 1.0):
            raise ConfigError(f"tau_base must lie in [0, 1], got {self.tau_base}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")


def learning_rate_at(i: int, cfg: ScheduleConfig) -> float:
    if i < 0:
        raise ConfigError(f"step {i} < 0")
    if i > cfg.n_total:
        return 0.0
    if cfg.n_warmup > 0 and i <= cfg.n_warmup:
        return i * cfg.eta_base / cfg.n_warmup
    if cfg.n_total == cfg.n_warmup:
        return cfg.eta_base
    frac = (i - cfg.n_warmup) * math.pi / (cfg.n_total - cfg.n_warmup)
    return cfg.eta_base * (1.0 + math.cos(frac)) * 0.5


def tau_at(i: int, cfg: ScheduleConfig) -> float:
    if i < 0:
        raise ConfigError(f"step {i} < 0")
    if cfg.n_total == 0 or i >= cfg.n_total:
        return 1.0
    return 1.0 - (1.0 - cfg.tau_base) / 2.0 * (math.cos(i * math.pi / cfg.n_total) + 1.0)


class AdamWState:
    """First/second moments per trainable parameter and the shared step count."""

    def __init__(self, params: ParamSet):
        self.m = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.trainable_items()}
        self.t = 0


def adamw_step(params: ParamSet, state: AdamWState, lr: float, weight_decay: float):
    """One decoupled-weight-decay Adam update; clears gradients afterwards.

    Raises NumericError before touching any parameter if a gradient is
    non-finite, so a bad step never corrupts the model.
    """
    updates = []
    for name, p in params.trainable_items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        updates.append((name, p, g))

    state.t += 1
    t = state.t
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, p, g in updates:
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        if weight_decay > 0.0 and not name.endswith(_NO_DECAY_SUFFIXES):
            p.data = p.data - (lr * weight_decay) * p.data
        step = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        p.data = p.data - lr * step.astype(p.data.dtype)
    params.zero_grads()

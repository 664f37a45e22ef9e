"""Contrastive baseline: one shared encoder, a projector, and an InfoNCE loss
whose negatives are either every other node (exact, quadratic) or k nodes
subsampled per anchor at every step.

Each sampled negative j contributes both a cross-view term s(u_i, v_j) and a
within-view term s(u_i, u_j); similarities are cosines over temperature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import AugmentationConfig, make_views
from .errors import ConfigError, MemoryLimitError
from .graphs import Dataset
from .metrics import MetricsRecord, embedding_spread, mean_embedding_norm
from .nn import MlpConfig, ParamSet, build_encoder, check_finite_loss, mlp_forward, mlp_init
from .optim import AdamWState, ScheduleConfig, adamw_step, learning_rate_at
from .tensor import Tensor, backward, tracker

FULL_GRAPH_CAP_DEFAULT = 20_000


@dataclass
class GraceConfig:
    k: int | str = "all"                 # negatives per anchor, or "all"
    temperature: float = 0.5
    projector_hidden: int = 512
    full_graph_cap: int = FULL_GRAPH_CAP_DEFAULT

    def validate(self):
        if self.k != "all":
            if not isinstance(self.k, int) or self.k < 2:
                raise ConfigError(f"grace.k must be 'all' or an integer >= 2, got {self.k!r}")
        if self.temperature <= 0:
            raise ConfigError(f"grace.temperature must be positive, got {self.temperature}")


def check_full_graph_guard(num_nodes: int, cfg: GraceConfig):
    """Refuse the exact quadratic objective above the node cap."""
    if cfg.k == "all" and num_nodes > cfg.full_graph_cap:
        raise MemoryLimitError(
            f"exact contrastive objective needs a {num_nodes} x {num_nodes} similarity "
            f"matrix; refusing above the cap of {cfg.full_graph_cap} nodes "
            f"(use a finite grace.k or raise full_graph_cap)")


def sample_negative_indices(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """(n, k) matrix of negatives: per row, k distinct nodes != row index."""
    keys = rng.random((n, n - 1))
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < n - 1 else \
        np.broadcast_to(np.arange(n - 1), (n, n - 1)).copy()
    # Column space [0, n-2] encodes all nodes except self.
    return idx + (idx >= np.arange(n)[:, None])


def _directional_loss(anchor_n: Tensor, other_n: Tensor, cfg: GraceConfig,
                      rng: np.random.Generator, k) -> Tensor:
    n = anchor_n.shape[0]
    t = cfg.temperature
    pos = T.tsum(T.mul(anchor_n, other_n), axis=1, keepdims=True)          # (N, 1)
    pos_exp = T.exp(T.scale(pos, 1.0 / t))
    if k == "all":
        mask = Tensor((1.0 - np.eye(n)).astype(anchor_n.dtype))
        inter = T.tsum(T.mul(T.exp(T.scale(T.matmul_t(anchor_n, other_n), 1.0 / t)), mask),
                       axis=1, keepdims=True)
        intra = T.tsum(T.mul(T.exp(T.scale(T.matmul_t(anchor_n, anchor_n), 1.0 / t)), mask),
                       axis=1, keepdims=True)
    else:
        idx = sample_negative_indices(n, k, rng)
        inter = T.tsum(T.exp(T.scale(T.gather_dot(anchor_n, other_n, idx), 1.0 / t)),
                       axis=1, keepdims=True)
        intra = T.tsum(T.exp(T.scale(T.gather_dot(anchor_n, anchor_n, idx), 1.0 / t)),
                       axis=1, keepdims=True)
    denom = T.add(pos_exp, T.add(inter, intra))
    per_node = T.sub(T.log(denom), T.scale(pos, 1.0 / t))
    return T.tmean(per_node)


def effective_k(k, n: int):
    if k == "all":
        return "all"
    if k > n - 1:
        warnings.warn(f"grace.k={k} exceeds {n - 1} available negatives; clamping")
        return n - 1
    return k


def grace_loss(u: Tensor, v: Tensor, cfg: GraceConfig, rng: np.random.Generator) -> Tensor:
    """Symmetrized InfoNCE over both view orders (fresh negatives each order)."""
    cfg.validate()
    n = u.shape[0]
    k = effective_k(cfg.k, n)
    un = T.l2_normalize_rows(u)
    vn = T.l2_normalize_rows(v)
    fwd = _directional_loss(un, vn, cfg, rng, k)
    bwd = _directional_loss(vn, un, cfg, rng, k)
    return T.scale(T.add(fwd, bwd), 0.5)


@dataclass
class GraceState:
    params: ParamSet            # encoder.* + projector.*
    opt: AdamWState
    schedules: ScheduleConfig
    step: int = 0


class GraceTrainer:
    def __init__(self, dataset: Dataset, encoder_config, aug: AugmentationConfig,
                 schedules: ScheduleConfig, grace_cfg: GraceConfig, seed: int = 0):
        schedules.validate()
        aug.validate()
        grace_cfg.validate()
        check_full_graph_guard(dataset.graph.num_nodes, grace_cfg)
        self.dataset = dataset
        self.encoder = build_encoder(encoder_config, dataset.features.shape[1])
        self.aug = aug
        self.schedules = schedules
        self.cfg = grace_cfg
        self.seed = seed
        dim = encoder_config.embedding_dim
        self.projector_cfg = MlpConfig(hidden=grace_cfg.projector_hidden, norm="none")
        self.embedding_dim = dim

    def init_state(self) -> GraceState:
        params = self.encoder.init_params((self.seed, 0))
        params = params.merged_with(
            mlp_init((self.seed, 3), self.embedding_dim, self.projector_cfg,
                     self.embedding_dim, prefix="projector."))
        return GraceState(params=params, opt=AdamWState(params), schedules=self.schedules)

    def update_step(self, state: GraceState) -> MetricsRecord:
        tracker.reset_peak()
        step = state.step
        v1, v2 = make_views(self.dataset, self.aug, (self.seed, step))
        h1 = self.encoder.forward(state.params, v1, train=True)
        h2 = self.encoder.forward(state.params, v2, train=True)
        u = mlp_forward(state.params, h1, self.projector_cfg, True, prefix="projector.")
        v = mlp_forward(state.params, h2, self.projector_cfg, True, prefix="projector.")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, step, 2))))
        loss = grace_loss(u, v, self.cfg, rng)
        check_finite_loss(loss, f"contrastive update step {step}")
        backward(loss)
        lr = learning_rate_at(step, self.schedules)
        adamw_step(state.params, state.opt, lr, self.schedules.weight_decay)
        state.step += 1
        rep = h1.data
        return MetricsRecord(step=step, loss=loss.item(), lr=lr,
                             spread=embedding_spread(rep), norm=mean_embedding_norm(rep),
                             peak_bytes=tracker.peak)

    def train(self, n_steps: int | None = None, metrics_every: int = 50,
              state: GraceState | None = None) -> tuple[GraceState, list[MetricsRecord]]:
        state = state or self.init_state()
        total = self.schedules.n_total if n_steps is None else n_steps
        records: list[MetricsRecord] = []
        for _ in range(total):
            record = self.update_step(state)
            if metrics_every and record.step % metrics_every == 0:
                records.append(record)
        return state, records


def train_grace(dataset: Dataset, encoder_config, aug: AugmentationConfig,
                schedules: ScheduleConfig, grace_cfg: GraceConfig,
                seed: int = 0, metrics_every: int = 50):
    trainer = GraceTrainer(dataset, encoder_config, aug, schedules, grace_cfg, seed)
    state, records = trainer.train(metrics_every=metrics_every)
    return trainer, state, records

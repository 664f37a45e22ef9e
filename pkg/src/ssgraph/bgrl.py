"""Bootstrapped twin-encoder training.

An online encoder plus predictor chases a target encoder that is updated only
as an exponential moving average of the online weights. The loss is the
negative cosine similarity between predicted and target embeddings, averaged
over both view orders; gradients flow through the online side only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .augment import AugmentationConfig, make_views
from .errors import ShapeError
from .graphs import Dataset
from .metrics import MetricsRecord, embedding_spread, mean_embedding_norm
from .nn import (MlpConfig, ParamSet, build_encoder, check_finite_loss,
                 ema_update, mlp_forward, mlp_init)
from .optim import AdamWState, ScheduleConfig, adamw_step, learning_rate_at, tau_at
from .tensor import Tensor, backward, no_grad, tracker

COSINE_EPS = 1e-8


def bgrl_loss(z: Tensor, h: Tensor) -> Tensor:
    """-2/N * sum_i cos(z_i, h_i); ``h`` is treated as a constant."""
    if z.shape != h.shape:
        raise ShapeError(f"prediction/target shape mismatch: {z.shape} vs {h.shape}")
    cos = T.cosine_rows(z, h.detach(), eps=COSINE_EPS)
    return T.scale(T.tmean(cos), -2.0)


@dataclass
class BgrlState:
    online: ParamSet            # encoder.* + predictor.* (+ projector.*)
    target: ParamSet            # encoder.* (+ projector.*), never receives gradients
    opt: AdamWState
    schedules: ScheduleConfig
    step: int = 0


@dataclass
class BgrlSettings:
    predictor_hidden: int = 512
    use_projector: bool = False
    projector_hidden: int = 512


class BgrlTrainer:
    """Owns one training run's state and its per-step update."""

    def __init__(self, dataset: Dataset, encoder_config, aug: AugmentationConfig,
                 schedules: ScheduleConfig, settings: BgrlSettings | None = None,
                 seed: int = 0):
        schedules.validate()
        aug.validate()
        self.dataset = dataset
        self.encoder = build_encoder(encoder_config, dataset.features.shape[1])
        self.aug = aug
        self.schedules = schedules
        self.settings = settings or BgrlSettings()
        self.seed = seed
        dim = encoder_config.embedding_dim
        norm = "batch" if encoder_config.norm == "batch" else "none"
        self.predictor_cfg = MlpConfig(hidden=self.settings.predictor_hidden, norm=norm)
        self.projector_cfg = MlpConfig(hidden=self.settings.projector_hidden, norm=norm)
        self.embedding_dim = dim

    def init_state(self, dtype=np.float32) -> BgrlState:
        """Online and target encoders draw from the same distribution with
        different seeds; the target carries no predictor."""
        online = self.encoder.init_params((self.seed, 0), dtype=dtype)
        target = self.encoder.init_params((self.seed, 1), dtype=dtype)
        dim = self.embedding_dim
        online = online.merged_with(
            mlp_init((self.seed, 2), dim, self.predictor_cfg, dim, dtype=dtype, prefix="predictor."))
        if self.settings.use_projector:
            online = online.merged_with(
                mlp_init((self.seed, 3), dim, self.projector_cfg, dim, dtype=dtype, prefix="projector."))
            target = target.merged_with(
                mlp_init((self.seed, 4), dim, self.projector_cfg, dim, dtype=dtype, prefix="projector."))
        return BgrlState(online=online, target=target, opt=AdamWState(online),
                         schedules=self.schedules)

    def _online_branch(self, state: BgrlState, view, train=True):
        h = self.encoder.forward(state.online, view, train=train)
        rep = h
        if self.settings.use_projector:
            h = mlp_forward(state.online, h, self.projector_cfg, train, prefix="projector.")
        z = mlp_forward(state.online, h, self.predictor_cfg, train, prefix="predictor.")
        return rep, z

    def _target_branch(self, state: BgrlState, view):
        with no_grad():
            h = self.encoder.forward(state.target, view, train=False)
            if self.settings.use_projector:
                h = mlp_forward(state.target, h, self.projector_cfg, False, prefix="projector.")
        return h

    def compute_loss(self, state: BgrlState, v1, v2):
        """Symmetrized cross-view prediction loss and the first view's online
        embedding (the downstream representation)."""
        rep1, z1 = self._online_branch(state, v1)
        h2_t = self._target_branch(state, v2)
        loss_a = bgrl_loss(z1, h2_t)

        _, z2 = self._online_branch(state, v2)
        h1_t = self._target_branch(state, v1)
        loss_b = bgrl_loss(z2, h1_t)
        return T.scale(T.add(loss_a, loss_b), 0.5), rep1

    def update_step(self, state: BgrlState) -> MetricsRecord:
        tracker.reset_peak()
        step = state.step
        v1, v2 = make_views(self.dataset, self.aug, (self.seed, step))
        loss, rep1 = self.compute_loss(state, v1, v2)
        check_finite_loss(loss, f"bootstrap update step {step}")
        backward(loss)

        lr = learning_rate_at(step, self.schedules)
        adamw_step(state.online, state.opt, lr, self.schedules.weight_decay)
        tau = tau_at(step, self.schedules)
        ema_update(state.target, state.online, tau)
        state.step += 1

        rep = rep1.data
        return MetricsRecord(step=step, loss=loss.item(), lr=lr, tau=tau,
                             spread=embedding_spread(rep), norm=mean_embedding_norm(rep),
                             loss_shifted=2.0 + loss.item(), peak_bytes=tracker.peak)

    def train(self, n_steps: int | None = None, metrics_every: int = 50,
              state: BgrlState | None = None) -> tuple[BgrlState, list[MetricsRecord]]:
        state = state or self.init_state()
        total = self.schedules.n_total if n_steps is None else n_steps
        records: list[MetricsRecord] = []
        for _ in range(total):
            record = self.update_step(state)
            if metrics_every and record.step % metrics_every == 0:
                records.append(record)
        return state, records


def train_bgrl(dataset: Dataset, encoder_config, aug: AugmentationConfig,
               schedules: ScheduleConfig, settings: BgrlSettings | None = None,
               seed: int = 0, metrics_every: int = 50):
    """Full training run; returns (trainer, final state, metrics records)."""
    trainer = BgrlTrainer(dataset, encoder_config, aug, schedules, settings, seed)
    state, records = trainer.train(metrics_every=metrics_every)
    return trainer, state, records

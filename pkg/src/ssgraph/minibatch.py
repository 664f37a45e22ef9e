"""Fanout-capped neighborhood sampling and the semi-supervised trainer.

Each step draws a batch of labeled central nodes (plus a configurable ratio
of unlabeled ones), induces the sampled multi-hop subgraph, and optimizes
cross-entropy on the labeled centrals plus an auxiliary bootstrapped loss on
all centrals. Boundary nodes only provide message-passing context; no loss
is ever applied to them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .augment import AugmentationConfig, identity_view, make_views
from .bgrl import BgrlSettings, BgrlState, bgrl_loss
from .errors import ConfigError
from .graphs import Dataset, Graph, SplitMask
from .metrics import MetricsRecord
from .nn import (MlpConfig, build_encoder, check_finite_loss, ema_update,
                 linear_head_forward, linear_head_init, mlp_forward, mlp_init)
from .optim import AdamWState, ScheduleConfig, adamw_step, learning_rate_at, tau_at
from .tensor import backward, no_grad, tracker


@dataclass
class FanoutSpec:
    caps: list[int] = field(default_factory=lambda: [10, 5])

    def validate(self):
        if not self.caps or any(c < 1 for c in self.caps):
            raise ConfigError(f"fanout caps must all be >= 1, got {self.caps}")

    @property
    def depth(self) -> int:
        return len(self.caps)


@dataclass
class BatchSpec:
    labeled: int = 256
    ratio: float = 0.0          # unlabeled centrals per labeled central
    aux_weight: float = 1.0     # weight of the bootstrapped term

    def validate(self):
        if self.labeled < 1:
            raise ConfigError(f"batch.labeled must be >= 1, got {self.labeled}")
        if self.ratio < 0 or self.aux_weight < 0:
            raise ConfigError("batch.ratio and batch.aux_weight must be nonnegative")


@dataclass
class Subgraph:
    nodes: np.ndarray           # original node ids, centrals first
    graph: Graph                # induced arcs, remapped to [0, n_sub)
    features: np.ndarray
    central_mask: np.ndarray

    @property
    def num_central(self) -> int:
        return int(self.central_mask.sum())


def sample_neighborhood(graph: Graph, seeds: np.ndarray, fanout: FanoutSpec,
                        rng: np.random.Generator,
                        features: np.ndarray | None = None) -> Subgraph | None:
    """Breadth-wise fanout-capped expansion, then the induced subgraph.

    Per hop every frontier node samples min(degree, cap) distinct neighbors;
    the union of everything sampled (plus the seeds) induces the subgraph.
    Returns None for empty seeds.
    """
    fanout.validate()
    seeds = np.asarray(seeds, dtype=np.int64)
    if seeds.size == 0:
        return None
    if len(np.unique(seeds)) != len(seeds):
        raise ConfigError("central seeds must be distinct")
    order: list[int] = list(seeds)
    seen = set(order)
    frontier = list(seeds)
    for cap in fanout.caps:
        nxt: list[int] = []
        for u in frontier:
            nbrs = graph.neighbors(u)
            if len(nbrs) > cap:
                nbrs = nbrs[rng.permutation(len(nbrs))[:cap]]
            for v in nbrs:
                v = int(v)
                if v not in seen:
                    seen.add(v)
                    order.append(v)
                    nxt.append(v)
        frontier = nxt
    nodes = np.asarray(order, dtype=np.int64)

    adj = sp.csr_matrix(
        (np.ones(graph.num_edges, dtype=np.int8), graph.col_indices, graph.row_offsets),
        shape=(graph.num_nodes, graph.num_nodes))
    sub = adj[nodes][:, nodes].tocsr()
    sub.sort_indices()
    induced = Graph(num_nodes=len(nodes),
                    row_offsets=sub.indptr.astype(np.int64),
                    col_indices=sub.indices.astype(np.int64))
    central = np.zeros(len(nodes), dtype=bool)
    central[:len(seeds)] = True
    return Subgraph(nodes=nodes, graph=induced,
                    features=features[nodes] if features is not None else None,
                    central_mask=central)


@dataclass
class SemisupState(BgrlState):
    pass                        # online additionally holds head.* parameters


class SemisupTrainer:
    """Minibatch trainer for the combined supervised + bootstrapped objective.

    aux_weight=0 with ratio=0 is exactly plain supervised minibatch training;
    the CLI's "supervised" method is this trainer with those settings and
    identity augmentations.
    """

    def __init__(self, dataset: Dataset, encoder_config, aug: AugmentationConfig,
                 schedules: ScheduleConfig, batch: BatchSpec, fanout: FanoutSpec,
                 settings: BgrlSettings | None = None, seed: int = 0):
        schedules.validate()
        aug.validate()
        batch.validate()
        fanout.validate()
        self.dataset = dataset
        self.labeled_pool = np.flatnonzero(dataset.splits.train & (dataset.labels >= 0))
        if len(self.labeled_pool) == 0:
            raise ConfigError("semi-supervised training needs at least one labeled train node")
        self.unlabeled_pool = np.flatnonzero(~dataset.splits.train)
        self.num_classes = dataset.num_classes
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        self.encoder = build_encoder(encoder_config, dataset.features.shape[1])
        self.aug = aug
        self.schedules = schedules
        self.batch = batch
        self.fanout = fanout
        self.settings = settings or BgrlSettings()
        self.seed = seed
        dim = encoder_config.embedding_dim
        norm = "batch" if encoder_config.norm == "batch" else "none"
        self.predictor_cfg = MlpConfig(hidden=self.settings.predictor_hidden, norm=norm)
        self.embedding_dim = dim

    def init_state(self) -> SemisupState:
        online = self.encoder.init_params((self.seed, 0))
        target = self.encoder.init_params((self.seed, 1))
        dim = self.embedding_dim
        online = online.merged_with(
            mlp_init((self.seed, 2), dim, self.predictor_cfg, dim, prefix="predictor."))
        online = online.merged_with(
            linear_head_init((self.seed, 5), dim, self.num_classes, prefix="head."))
        return SemisupState(online=online, target=target, opt=AdamWState(online),
                            schedules=self.schedules)

    def _draw_batch(self, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        n_lab = min(self.batch.labeled, len(self.labeled_pool))
        labeled = rng.choice(self.labeled_pool, size=n_lab, replace=False)
        n_unlab = int(round(self.batch.ratio * self.batch.labeled))
        n_unlab = min(n_unlab, len(self.unlabeled_pool))
        if n_unlab > 0:
            unlabeled = rng.choice(self.unlabeled_pool, size=n_unlab, replace=False)
            seeds = np.concatenate([labeled, unlabeled])
        else:
            seeds = labeled
        return seeds, n_lab

    def update_step(self, state: SemisupState) -> MetricsRecord:
        tracker.reset_peak()
        step = state.step
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, step, 7))))
        seeds, n_lab = self._draw_batch(rng)
        sub = sample_neighborhood(self.dataset.graph, seeds, self.fanout, rng,
                                  features=self.dataset.features)
        sub_ds = Dataset(graph=sub.graph, features=sub.features,
                         labels=self.dataset.labels[sub.nodes],
                         splits=SplitMask(train=sub.central_mask,
                                          val=np.zeros(len(sub.nodes), dtype=bool),
                                          test=np.zeros(len(sub.nodes), dtype=bool)))
        v1, v2 = make_views(sub_ds, self.aug, (self.seed, step))
        central_idx = np.flatnonzero(sub.central_mask)
        labeled_idx = central_idx[:n_lab]
        labels = self.dataset.labels[seeds[:n_lab]]

        h1 = self.encoder.forward(state.online, v1, train=True)
        logits = linear_head_forward(state.online, T.gather_rows(h1, labeled_idx))
        ce = T.cross_entropy_logits(logits, labels)

        lam = self.batch.aux_weight
        aux_value = 0.0
        if lam > 0.0:
            z1 = mlp_forward(state.online, h1, self.predictor_cfg, True, prefix="predictor.")
            with no_grad():
                h2_t = self.encoder.forward(state.target, v2, train=False)
            term_a = bgrl_loss(T.gather_rows(z1, central_idx), T.gather_rows(h2_t, central_idx))
            h2 = self.encoder.forward(state.online, v2, train=True)
            z2 = mlp_forward(state.online, h2, self.predictor_cfg, True, prefix="predictor.")
            with no_grad():
                h1_t = self.encoder.forward(state.target, v1, train=False)
            term_b = bgrl_loss(T.gather_rows(z2, central_idx), T.gather_rows(h1_t, central_idx))
            aux = T.scale(T.add(term_a, term_b), 0.5)
            aux_value = aux.item()
            loss = T.add(ce, T.scale(aux, lam))
        else:
            loss = ce
        check_finite_loss(loss, f"semi-supervised update step {step}")
        backward(loss)

        lr = learning_rate_at(step, self.schedules)
        adamw_step(state.online, state.opt, lr, self.schedules.weight_decay)
        tau = tau_at(step, self.schedules)
        ema_update(state.target, state.online, tau)
        state.step += 1
        return MetricsRecord(step=step, loss=loss.item(), lr=lr, tau=tau,
                             loss_ce=ce.item(), loss_aux=aux_value, peak_bytes=tracker.peak)

    def train(self, n_steps: int | None = None, metrics_every: int = 50,
              state: SemisupState | None = None) -> tuple[SemisupState, list[MetricsRecord]]:
        state = state or self.init_state()
        total = self.schedules.n_total if n_steps is None else n_steps
        records: list[MetricsRecord] = []
        for _ in range(total):
            record = self.update_step(state)
            if metrics_every and record.step % metrics_every == 0:
                records.append(record)
        return state, records

    def classifier_accuracy(self, state: SemisupState, mask: np.ndarray) -> float:
        """Full-graph eval-mode accuracy of the trained head on ``mask`` nodes."""
        with no_grad():
            h = self.encoder.forward(state.online, identity_view(self.dataset), train=False)
            logits = linear_head_forward(state.online, h).data
        pred = logits.argmax(axis=1)
        labels = self.dataset.labels
        idx = np.flatnonzero(mask & (labels >= 0))
        return float((pred[idx] == labels[idx]).mean())


def supervised_trainer(dataset: Dataset, encoder_config, schedules: ScheduleConfig,
                       batch: BatchSpec, fanout: FanoutSpec, seed: int = 0) -> SemisupTrainer:
    """Plain supervised minibatch training: no auxiliary loss, no unlabeled
    centrals, identity augmentations."""
    plain = BatchSpec(labeled=batch.labeled, ratio=0.0, aux_weight=0.0)
    return SemisupTrainer(dataset, encoder_config, AugmentationConfig(),
                          schedules, plain, fanout, seed=seed)

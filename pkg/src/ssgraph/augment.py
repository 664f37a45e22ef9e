"""Stochastic graph augmentations: shared feature masking and edge masking.

Randomness is counter-based: a view's stream is keyed by
(run seed, step, view index), so any training step can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graphs import Dataset, Graph, NormalizedGraph, graph_from_arcs, normalize


@dataclass
class AugmentationConfig:
    p_f1: float = 0.0
    p_f2: float = 0.0
    p_e1: float = 0.0
    p_e2: float = 0.0

    def validate(self):
        for name in ("p_f1", "p_f2", "p_e1", "p_e2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"augment.{name} must lie in [0, 1], got {v}")


@dataclass
class View:
    """One augmented copy of a graph dataset."""

    graph: Graph
    features: np.ndarray
    seed_key: tuple = ()
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def normalized(self, kind: str) -> NormalizedGraph:
        if kind not in self._norm_cache:
            self._norm_cache[kind] = normalize(self.graph, kind)
        return self._norm_cache[kind]


def mask_features(features: np.ndarray, p_f: float, rng: np.random.Generator) -> np.ndarray:
    """Zero a single Bernoulli(p_f) subset of feature columns across all nodes."""
    if not (0.0 <= p_f <= 1.0):
        raise ConfigError(f"feature mask probability {p_f} out of [0, 1]")
    keep = rng.random(features.shape[1]) >= p_f
    return features * keep.astype(features.dtype)


def mask_edges(graph: Graph, p_e: float, rng: np.random.Generator) -> Graph:
    """Drop each undirected edge with probability p_e (both arcs together)."""
    if not (0.0 <= p_e <= 1.0):
        raise ConfigError(f"edge mask probability {p_e} out of [0, 1]")
    edges = graph.undirected_edges()
    keep = rng.random(len(edges)) >= p_e
    kept = edges[keep]
    return graph_from_arcs(graph.num_nodes, kept[:, 0], kept[:, 1])


def view_rng(seed_key: tuple) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_key)))


def make_view(dataset: Dataset, p_f: float, p_e: float, seed_key: tuple) -> View:
    rng = view_rng(seed_key)
    graph = mask_edges(dataset.graph, p_e, rng)
    features = mask_features(dataset.features, p_f, rng)
    return View(graph=graph, features=features, seed_key=seed_key)


def make_views(dataset: Dataset, config: AugmentationConfig, seed_key: tuple) -> tuple[View, View]:
    """Two independently masked views; view i extends the key with i."""
    config.validate()
    v1 = make_view(dataset, config.p_f1, config.p_e1, tuple(seed_key) + (0,))
    v2 = make_view(dataset, config.p_f2, config.p_e2, tuple(seed_key) + (1,))
    return v1, v2


def identity_view(dataset: Dataset) -> View:
    return View(graph=dataset.graph, features=dataset.features, seed_key=())

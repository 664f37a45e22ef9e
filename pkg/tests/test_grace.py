"""Contrastive loss against a brute-force oracle, subsampling behavior, the
memory guard, and footprint growth in k and N."""

import numpy as np
import pytest

from ssgraph.augment import AugmentationConfig
from ssgraph.errors import MemoryLimitError
from ssgraph.grace import (GraceConfig, GraceTrainer, grace_loss,
                           sample_negative_indices)
from ssgraph.graphs import Dataset, SplitMask, generate_sbm, graph_from_arcs
from ssgraph.nn import EncoderConfig
from ssgraph.optim import ScheduleConfig
from ssgraph.tensor import Tensor


def rng(seed=0):
    return np.random.default_rng(seed)


def infonce_oracle(u: np.ndarray, v: np.ndarray, temperature: float) -> float:
    """Independent exact all-pairs route: plain numpy, no tape, no eps."""
    un = u / np.linalg.norm(u, axis=1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=1, keepdims=True)

    def direction(a, b):
        n = len(a)
        total = 0.0
        for i in range(n):
            pos = a[i] @ b[i]
            denom = np.exp(pos / temperature)
            for j in range(n):
                if j == i:
                    continue
                denom += np.exp(a[i] @ b[j] / temperature)
                denom += np.exp(a[i] @ a[j] / temperature)
            total += np.log(denom) - pos / temperature
        return total / n

    return 0.5 * (direction(un, vn) + direction(vn, un))


class TestGraceLoss:
    def test_matches_brute_force_all_pairs(self):
        u = rng(1).standard_normal((4, 2))
        v = rng(2).standard_normal((4, 2))
        cfg = GraceConfig(k="all", temperature=0.5)
        got = float(grace_loss(Tensor(u), Tensor(v), cfg, rng(0)).data)
        assert got == pytest.approx(infonce_oracle(u, v, 0.5), abs=1e-6)

    def test_identical_embeddings_give_log_1_plus_2k(self):
        base = np.tile(np.array([[0.3, -0.7, 1.1]]), (10, 1))
        for k in (2, 4, "all"):
            cfg = GraceConfig(k=k, temperature=0.5)
            got = float(grace_loss(Tensor(base.copy()), Tensor(base.copy()), cfg, rng(3)).data)
            k_eff = 9 if k == "all" else k
            assert got == pytest.approx(np.log(1 + 2 * k_eff), abs=1e-6)

    def test_dominant_positive_limit(self):
        # positive cos 1, every negative cos -1, temperature 0.1:
        # per-node loss = log(1 + 2k e^-20), tiny for small k
        u = np.array([[1.0, 0.0], [-1.0, 0.0]])
        cfg = GraceConfig(k=2, temperature=0.1)     # clamps to k=1
        with pytest.warns(UserWarning):
            got = float(grace_loss(Tensor(u.copy()), Tensor(u.copy()), cfg, rng(0)).data)
        assert got == pytest.approx(np.log(1 + 2 * np.exp(-20.0)), abs=1e-9)
        assert got < 1e-8

    def test_loss_nonnegative_for_random_inputs(self):
        for seed in range(10):
            u = rng(seed).standard_normal((7, 3))
            v = rng(seed + 100).standard_normal((7, 3))
            for k in (2, 4, "all"):
                cfg = GraceConfig(k=k, temperature=0.4)
                assert float(grace_loss(Tensor(u), Tensor(v), cfg, rng(seed)).data) >= 0.0

    def test_k_equal_n_minus_1_matches_exact(self):
        u = rng(5).standard_normal((16, 4))
        v = rng(6).standard_normal((16, 4))
        exact = float(grace_loss(Tensor(u), Tensor(v), GraceConfig(k="all"), rng(0)).data)
        sub = float(grace_loss(Tensor(u), Tensor(v), GraceConfig(k=15), rng(1)).data)
        assert sub == pytest.approx(exact, abs=1e-6)

    def test_expected_subsampled_loss_monotone_in_k(self):
        u = rng(8).standard_normal((12, 4))
        v = rng(9).standard_normal((12, 4))
        means = []
        for k in (2, 4, 8, 11):
            draws = [float(grace_loss(Tensor(u), Tensor(v), GraceConfig(k=k), rng(s)).data)
                     for s in range(200)]
            means.append(np.mean(draws))
        assert all(b > a for a, b in zip(means, means[1:]))
        exact = float(grace_loss(Tensor(u), Tensor(v), GraceConfig(k="all"), rng(0)).data)
        assert means[-1] == pytest.approx(exact, abs=1e-6)   # k = N-1 is exact

    def test_sampled_variant_deterministic_given_rng(self):
        u = rng(1).standard_normal((9, 3))
        v = rng(2).standard_normal((9, 3))
        cfg = GraceConfig(k=3)
        a = float(grace_loss(Tensor(u), Tensor(v), cfg, rng(42)).data)
        b = float(grace_loss(Tensor(u), Tensor(v), cfg, rng(42)).data)
        assert a == b


class TestNegativeSampling:
    def test_indices_distinct_and_never_self(self):
        for seed in range(5):
            idx = sample_negative_indices(20, 7, rng(seed))
            assert idx.shape == (20, 7)
            for i, row in enumerate(idx):
                assert i not in row
                assert len(set(row)) == 7
                assert row.min() >= 0 and row.max() < 20

    def test_coverage_is_uniformish(self):
        counts = np.zeros(10)
        for seed in range(300):
            idx = sample_negative_indices(10, 3, rng(seed))
            np.add.at(counts, idx.reshape(-1), 1)
        freq = counts / counts.sum()
        assert abs(freq.max() - freq.min()) < 0.02


def tiny_dataset(n_per_block=8, seed=0):
    return generate_sbm(2, n_per_block, 0.6, 0.1, 6, 0.5, seed=seed)


def make_trainer(ds, k, seed=0, total=20):
    enc = EncoderConfig(kind="gcn", layer_sizes=[8, 4], activation="prelu", norm="none")
    sched = ScheduleConfig(eta_base=1e-3, n_total=total, n_warmup=2)
    return GraceTrainer(ds, enc, AugmentationConfig(0.2, 0.2, 0.2, 0.2), sched,
                        GraceConfig(k=k, projector_hidden=8), seed=seed)


class TestGraceTrainer:
    def test_memory_counter_monotone_in_k(self):
        ds = generate_sbm(2, 150, 0.05, 0.01, 8, 0.5, seed=0)
        peaks = {}
        for k in (2, 64, 256):
            trainer = make_trainer(ds, k)
            peaks[k] = trainer.update_step(trainer.init_state()).peak_bytes
        assert peaks[2] < peaks[64] < peaks[256]

    def test_full_negatives_footprint_grows_quadratically(self):
        peaks = {}
        for n_per_block in (100, 200):
            ds = generate_sbm(2, n_per_block, 0.05, 0.01, 8, 0.5, seed=0)
            full = make_trainer(ds, "all")
            sub = make_trainer(ds, 8)
            peaks[n_per_block] = (full.update_step(full.init_state()).peak_bytes,
                                  sub.update_step(sub.init_state()).peak_bytes)
        full_ratio = peaks[200][0] / peaks[100][0]
        sub_ratio = peaks[200][1] / peaks[100][1]
        assert full_ratio > 3.0        # ~4x from the N^2 similarity matrices
        assert sub_ratio < 2.5         # ~2x from linear terms
        assert peaks[200][0] > peaks[200][1]

    def test_arxiv_scale_full_graph_refused(self):
        n = 169_343
        graph = graph_from_arcs(n, np.array([0]), np.array([1]))
        ds = Dataset(graph=graph, features=np.zeros((n, 2), dtype=np.float32),
                     labels=np.zeros(n, dtype=np.int64),
                     splits=SplitMask(train=np.zeros(n, bool), val=np.zeros(n, bool),
                                      test=np.zeros(n, bool)))
        with pytest.raises(MemoryLimitError):
            make_trainer(ds, "all")

    def test_training_reduces_loss_and_is_deterministic(self):
        ds = tiny_dataset(n_per_block=12)
        runs = []
        for _ in range(2):
            enc = EncoderConfig(kind="gcn", layer_sizes=[8, 4], activation="prelu", norm="none")
            sched = ScheduleConfig(eta_base=5e-3, n_total=80, n_warmup=8)
            trainer = GraceTrainer(ds, enc, AugmentationConfig(0.2, 0.2, 0.2, 0.2), sched,
                                   GraceConfig(k=4, projector_hidden=8), seed=3)
            state, records = trainer.train(metrics_every=1)
            losses = [r.loss for r in records]
            runs.append((losses, {n: t.data.copy() for n, t in state.params.items()}))
        early = np.mean(runs[0][0][:10])
        late = np.mean(runs[0][0][-10:])
        assert late < early
        assert runs[0][0] == runs[1][0]
        for name in runs[0][1]:
            assert np.array_equal(runs[0][1][name], runs[1][1][name])

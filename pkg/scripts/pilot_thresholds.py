#!/usr/bin/env python3
"""Pilot runs behind the committed acceptance thresholds.

Prints the quantities the acceptance suite asserts on (collapse diagnostics,
probe gaps, k-sensitivity, memory slopes, semi-supervised ordering) so the
thresholds in tests/test_acceptance.py can be audited or re-derived.
"""

import time

import numpy as np
import scipy.stats

from ssgraph.augment import AugmentationConfig
from ssgraph.bgrl import BgrlSettings, BgrlTrainer
from ssgraph.cli import bench_peaks
from ssgraph.evaluate import ProbeConfig, embed_frozen, linear_probe, random_init_baseline
from ssgraph.grace import GraceConfig, GraceTrainer
from ssgraph.graphs import Dataset, generate_sbm, random_split
from ssgraph.minibatch import BatchSpec, FanoutSpec, SemisupTrainer, supervised_trainer
from ssgraph.nn import EncoderConfig
from ssgraph.optim import ScheduleConfig

ENC = EncoderConfig(kind="gcn", layer_sizes=[64, 32], activation="prelu", norm="batch")
AUG = AugmentationConfig(p_f1=0.2, p_f2=0.1, p_e1=0.2, p_e2=0.3)
SETTINGS = BgrlSettings(predictor_hidden=64)
PROBE = ProbeConfig(mode="grid_full")


def sched(total=500, warmup=50, eta=5e-3):
    return ScheduleConfig(eta_base=eta, n_total=total, n_warmup=warmup)


def acceptance_dataset(seed=0):
    return generate_sbm(4, 100, p_in=0.1, p_out=0.01, feature_dim=64,
                        signal=0.3, seed=seed)


def pilot_non_collapse_and_probe():
    print("== non-collapse + probe gap (5 seeds) ==")
    t0 = time.time()
    for seed in range(5):
        ds = acceptance_dataset(seed)
        trainer = BgrlTrainer(ds, ENC, AUG, sched(), SETTINGS, seed=seed)
        state = trainer.init_state()
        records = [trainer.update_step(state) for _ in range(500)]
        init_norm = records[0].norm
        final = records[-1]
        emb = embed_frozen(trainer.encoder, state.online, ds)
        probe = linear_probe(emb, ds.labels, ds.splits, PROBE)
        rand = random_init_baseline(ENC, ds, seed=seed, probe_cfg=PROBE)
        losses = [r.loss for r in records]
        spreads = [r.spread for r in records[100:]]
        print(f"seed {seed}: loss {losses[0]:+.3f}->{final.loss:+.3f} "
              f"min_spread(after100) {min(spreads):.3f} norm {init_norm:.3f}->{final.norm:.3f} "
              f"ratio {final.norm / init_norm:.2f} "
              f"probe {probe['test_accuracy']:.3f} rand {rand['test_accuracy']:.3f}")
    print(f"  [{time.time() - t0:.1f}s]")


def pilot_k_sensitivity():
    print("== grace k sensitivity (5 seeds) ==")
    t0 = time.time()
    acc = {2: [], 64: [], "bgrl": []}
    for seed in range(5):
        ds = acceptance_dataset(seed)
        for k in (2, 64):
            trainer = GraceTrainer(ds, ENC, AUG, sched(), GraceConfig(k=k, projector_hidden=64),
                                   seed=seed)
            state, _ = trainer.train(metrics_every=0)
            emb = embed_frozen(trainer.encoder, state.params, ds)
            acc[k].append(linear_probe(emb, ds.labels, ds.splits, PROBE)["test_accuracy"])
        trainer = BgrlTrainer(ds, ENC, AUG, sched(), SETTINGS, seed=seed)
        state, _ = trainer.train(metrics_every=0)
        emb = embed_frozen(trainer.encoder, state.online, ds)
        acc["bgrl"].append(linear_probe(emb, ds.labels, ds.splits, PROBE)["test_accuracy"])
    for key, vals in acc.items():
        print(f"  {key}: {np.mean(vals):.3f} +- {np.std(vals):.3f} {[f'{v:.2f}' for v in vals]}")
    diffs = np.array(acc[64]) - np.array(acc[2])
    t_stat, p_two = scipy.stats.ttest_rel(acc[64], acc[2])
    p_one = p_two / 2 if t_stat > 0 else 1 - p_two / 2
    print(f"  paired diff mean {diffs.mean():.3f}, one-sided p {p_one:.4f}")
    print(f"  bgrl vs k64 gap: {np.mean(acc['bgrl']) - np.mean(acc[64]):.3f}")
    print(f"  [{time.time() - t0:.1f}s]")


def pilot_memory_slopes():
    print("== memory slopes over N in {256,512,1024,2048} ==")
    t0 = time.time()
    ns = [256, 512, 1024, 2048]
    peaks = {"bgrl": [], "grace": []}
    for n in ns:
        out = bench_peaks(n, "all")
        peaks["bgrl"].append(out["bgrl"])
        peaks["grace"].append(out["grace"])
    for method, vals in peaks.items():
        slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
        print(f"  {method}: peaks {vals} slope {slope:.3f}")
    print(f"  [{time.time() - t0:.1f}s]")


def pilot_semisup():
    print("== semi-supervised mixing (5 seeds, 1% labeled) ==")
    t0 = time.time()

    def one(seed, ratio, aux):
        ds = generate_sbm(4, 100, 0.1, 0.01, 64, 0.3, seed=seed)
        splits = random_split(ds.graph.num_nodes, (0.01, 0.2), seed=seed)
        ds = Dataset(graph=ds.graph, features=ds.features, labels=ds.labels, splits=splits)
        batch = BatchSpec(labeled=4, ratio=ratio, aux_weight=aux)
        fanout = FanoutSpec([10, 5])
        s = sched(total=300, warmup=30, eta=1e-2)
        if aux == 0.0:
            trainer = supervised_trainer(ds, ENC, s, batch, fanout, seed=seed)
        else:
            trainer = SemisupTrainer(ds, ENC, AUG, s, batch, fanout, SETTINGS, seed=seed)
        state, _ = trainer.train(metrics_every=0)
        return trainer.classifier_accuracy(state, ds.splits.val)

    rows = {"supervised": [], "ratio0": [], "ratio2": []}
    for seed in range(5):
        rows["supervised"].append(one(seed, 0.0, 0.0))
        rows["ratio0"].append(one(seed, 0.0, 1.0))
        rows["ratio2"].append(one(seed, 2.0, 1.0))
    for key, vals in rows.items():
        print(f"  {key}: {np.mean(vals):.3f} {[f'{v:.2f}' for v in vals]}")
    print(f"  [{time.time() - t0:.1f}s]")


if __name__ == "__main__":
    pilot_non_collapse_and_probe()
    pilot_k_sensitivity()
    pilot_memory_slopes()
    pilot_semisup()

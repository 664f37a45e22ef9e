#!/usr/bin/env python3
"""Config search behind the acceptance thresholds (exploratory, not shipped
as part of the test suite): vary feature dimension, step counts, and learning
rates on the pinned SBM and report method gaps."""

import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ssgraph.augment import AugmentationConfig
from ssgraph.bgrl import BgrlSettings, BgrlTrainer
from ssgraph.evaluate import ProbeConfig, embed_frozen, linear_probe, random_init_baseline
from ssgraph.grace import GraceConfig, GraceTrainer
from ssgraph.graphs import generate_sbm
from ssgraph.nn import EncoderConfig
from ssgraph.optim import ScheduleConfig

ENC = EncoderConfig(kind="gcn", layer_sizes=[64, 32], activation="prelu", norm="batch")
AUG = AugmentationConfig(0.2, 0.1, 0.2, 0.3)
PROBE = ProbeConfig(mode="grid_full")


def dataset(fd, seed):
    return generate_sbm(4, 100, 0.1, 0.01, feature_dim=fd, signal=0.3, seed=seed)


def run_cell(job):
    method, fd, steps, eta, seed, k = job
    ds = dataset(fd, seed)
    sched = ScheduleConfig(eta_base=eta, n_total=steps, n_warmup=max(1, steps // 10))
    if method == "rand":
        return job, random_init_baseline(ENC, ds, seed=seed, probe_cfg=PROBE)["test_accuracy"]
    if method == "bgrl":
        trainer = BgrlTrainer(ds, ENC, AUG, sched, BgrlSettings(predictor_hidden=64), seed=seed)
        state, _ = trainer.train(metrics_every=0)
        params = state.online
    else:
        trainer = GraceTrainer(ds, ENC, AUG, sched, GraceConfig(k=k, projector_hidden=64), seed=seed)
        state, _ = trainer.train(metrics_every=0)
        params = state.params
    emb = embed_frozen(trainer.encoder, params, ds)
    return job, linear_probe(emb, ds.labels, ds.splits, PROBE)["test_accuracy"]


def main():
    seeds = range(3)
    jobs = []
    for fd in (16, 64):
        for seed in seeds:
            jobs.append(("rand", fd, 0, 0.0, seed, None))
            for steps, eta in ((500, 5e-3), (1000, 5e-3)):
                jobs.append(("bgrl", fd, steps, eta, seed, None))
            for steps in (200, 500):
                for k in (2, 64):
                    jobs.append(("grace", fd, steps, 5e-3, seed, k))
    with ProcessPoolExecutor(max_workers=2) as pool:
        results = dict(pool.map(run_cell, jobs))
    cells = {}
    for (method, fd, steps, eta, seed, k), acc in results.items():
        cells.setdefault((method, fd, steps, k), []).append(acc)
    for key in sorted(cells, key=str):
        vals = cells[key]
        print(f"{key}: {np.mean(vals):.3f} +- {np.std(vals):.3f} {[f'{v:.2f}' for v in vals]}")


if __name__ == "__main__":
    sys.exit(main())

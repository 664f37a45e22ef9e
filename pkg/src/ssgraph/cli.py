"""Command-line entry point.

Commands: gen-data, train, eval, ablate-k, schedule-dump, bench-memory.
Every command is reproducible from (config, seed); SSGRAPH_SEED supplies the
default seed. Exit codes: 0 success, 2 config error, 3 numeric failure,
4 refused by the memory guard.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bgrl import BgrlSettings, BgrlTrainer
from .config import PRESETS, RunConfig, apply_preset, set_dotted
from .errors import (ConfigError, DataFormatError, MemoryLimitError,
                     NumericError, ShapeError, StructureError)
from .evaluate import (CostModel, ProbeConfig, attention_entropy_histogram,
                       embed_frozen, linear_probe, predict_cost)
from .grace import GraceTrainer
from .graphs import Dataset, generate_sbm, random_split
from .metrics import embedding_spread, mean_embedding_norm, write_jsonl
from .minibatch import SemisupTrainer, supervised_trainer
from .nn import build_encoder
from .optim import ScheduleConfig, learning_rate_at, tau_at
from .storage import load_dataset_dir, read_checkpoint, save_dataset


def default_seed() -> int:
    return int(os.environ.get("SSGRAPH_SEED", "0"))


def load_config_for_run(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = RunConfig.from_json(Path(args.config).read_text())
    if getattr(args, "preset", None):
        cfg = apply_preset(cfg, args.preset)
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "data", None):
        cfg.data.files = args.data
        cfg.data.sbm = None
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    elif not getattr(args, "config", None):
        cfg.seed = default_seed()
    # named method-block flags
    if getattr(args, "grace_k", None) is not None:
        cfg.grace.k = args.grace_k if args.grace_k == "all" else int(args.grace_k)
    if getattr(args, "grace_temperature", None) is not None:
        cfg.grace.temperature = args.grace_temperature
    if getattr(args, "batch_labeled", None) is not None:
        cfg.batch.labeled = args.batch_labeled
    if getattr(args, "batch_ratio", None) is not None:
        cfg.batch.ratio = args.batch_ratio
    if getattr(args, "batch_aux_weight", None) is not None:
        cfg.batch.aux_weight = args.batch_aux_weight
    if getattr(args, "fanout", None):
        cfg.fanout.caps = [int(x) for x in args.fanout.split(",")]
    for override in getattr(args, "set", None) or []:
        if "=" not in override:
            raise ConfigError(f"--set expects key=value, got {override!r}")
        path, raw = override.split("=", 1)
        cfg = set_dotted(cfg, path, raw)
    if getattr(args, "out", None):
        cfg.out = args.out
    return cfg.validate()


def build_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data.files is not None:
        return load_dataset_dir(cfg.data.files)
    s = cfg.data.sbm
    return generate_sbm(s.blocks, s.nodes_per_block, s.p_in, s.p_out,
                        s.feature_dim, s.signal, s.seed,
                        split_fractions=(s.train_frac, s.val_frac))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out or f"runs/{cfg.method}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, summary: dict):
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


def cmd_gen_data(args) -> int:
    try:
        blocks_s, npb_s = args.sbm.lower().split("x")
        blocks, npb = int(blocks_s), int(npb_s)
    except ValueError:
        raise ConfigError(f"--sbm expects BLOCKSxNODES (e.g. 4x100), got {args.sbm!r}") from None
    seed = args.seed if args.seed is not None else default_seed()
    ds = generate_sbm(blocks, npb, args.p_in, args.p_out, args.feature_dim,
                      args.signal, seed, split_fractions=(args.train_frac, args.val_frac))
    save_dataset(args.out, ds)
    print(f"wrote {args.out}: N={ds.graph.num_nodes} M={ds.graph.num_edges} "
          f"F={ds.features.shape[1]} C={ds.num_classes}")
    return 0


def _save_encoder(out: Path, params):
    params.subset("encoder.").save(out / "encoder.ckpt")


def cmd_train(args) -> int:
    cfg = load_config_for_run(args)
    dataset = build_dataset(cfg)
    out = _out_dir(cfg)
    (out / "config.json").write_text(cfg.to_json())
    settings = BgrlSettings(predictor_hidden=cfg.predictor_hidden,
                            use_projector=cfg.use_projector,
                            projector_hidden=cfg.projector_hidden)
    summary: dict = {"method": cfg.method, "seed": cfg.seed,
                     "num_nodes": dataset.graph.num_nodes,
                     "num_arcs": dataset.graph.num_edges}

    if cfg.method == "bgrl":
        trainer = BgrlTrainer(dataset, cfg.encoder, cfg.augment, cfg.optim,
                              settings, seed=cfg.seed)
        state, records = trainer.train(metrics_every=cfg.metrics_every)
        write_jsonl(out / "metrics.jsonl", records)
        _save_encoder(out, state.online)
        if records:
            summary["final"] = json.loads(records[-1].to_json())
    elif cfg.method == "grace":
        trainer = GraceTrainer(dataset, cfg.encoder, cfg.augment, cfg.optim,
                               cfg.grace, seed=cfg.seed)
        state, records = trainer.train(metrics_every=cfg.metrics_every)
        write_jsonl(out / "metrics.jsonl", records)
        _save_encoder(out, state.params)
        if records:
            summary["final"] = json.loads(records[-1].to_json())
    elif cfg.method == "random-init":
        encoder = build_encoder(cfg.encoder, dataset.features.shape[1])
        params = encoder.init_params((cfg.seed, 0))
        write_jsonl(out / "metrics.jsonl", [])
        params.subset("encoder.").save(out / "encoder.ckpt")
        probe = linear_probe(embed_frozen(encoder, params, dataset),
                             dataset.labels, dataset.splits, cfg.probe, cfg.seed)
        (out / "probe.json").write_text(json.dumps(probe, indent=2))
        summary["probe"] = probe
    elif cfg.method in ("supervised", "semisup"):
        if cfg.method == "supervised":
            trainer = supervised_trainer(dataset, cfg.encoder, cfg.optim,
                                         cfg.batch, cfg.fanout, seed=cfg.seed)
        else:
            trainer = SemisupTrainer(dataset, cfg.encoder, cfg.augment, cfg.optim,
                                     cfg.batch, cfg.fanout, settings, seed=cfg.seed)
        state, records = trainer.train(metrics_every=cfg.metrics_every)
        write_jsonl(out / "metrics.jsonl", records)
        _save_encoder(out, state.online)
        state.online.save(out / "model.ckpt")
        summary["accuracy"] = {
            "train": trainer.classifier_accuracy(state, dataset.splits.train),
            "val": trainer.classifier_accuracy(state, dataset.splits.val),
            "test": trainer.classifier_accuracy(state, dataset.splits.test),
        }
    else:  # pragma: no cover - validate() blocks this
        raise ConfigError(f"unhandled method {cfg.method!r}")

    _write_summary(out, summary)
    print(f"{cfg.method}: run complete, artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt_path = Path(args.ckpt)
    config_path = Path(args.config) if args.config else ckpt_path.parent / "config.json"
    if not config_path.exists():
        raise ConfigError(f"no config found at {config_path}; pass --config")
    cfg = RunConfig.from_json(config_path.read_text())
    if args.data:
        cfg.data.files = args.data
        cfg.data.sbm = None
    dataset = build_dataset(cfg)
    encoder = build_encoder(cfg.encoder, dataset.features.shape[1])
    params = encoder.init_params((cfg.seed, 0)).subset("encoder.")
    params.load_values(read_checkpoint(ckpt_path))
    emb = embed_frozen(encoder, params, dataset)

    probe_cfg = ProbeConfig(mode=args.probe)
    vals, tests = [], []
    for s in range(args.seeds):
        splits = dataset.splits if args.keep_splits else \
            random_split(dataset.graph.num_nodes, (0.1, 0.1), seed=s)
        result = linear_probe(emb, dataset.labels, splits, probe_cfg, seed=s)
        vals.append(result["val_accuracy"])
        tests.append(result["test_accuracy"])
    probe_out = {
        "mode": args.probe, "seeds": args.seeds,
        "val_accuracies": vals, "test_accuracies": tests,
        "val_mean": float(np.mean(vals)), "val_std": float(np.std(vals)),
        "test_mean": float(np.mean(tests)), "test_std": float(np.std(tests)),
    }
    diag = {
        "spread": embedding_spread(emb),
        "mean_norm": mean_embedding_norm(emb),
    }
    if cfg.encoder.kind == "gat":
        hist = attention_entropy_histogram(encoder, params, dataset)
        diag["attention_entropy"] = {
            "counts": hist["counts"].tolist(),
            "bin_edges": hist["bin_edges"].tolist(),
            "mean": float(hist["values"].mean()),
        }
    out = Path(args.out) if args.out else ckpt_path.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.json").write_text(json.dumps(probe_out, indent=2))
    (out / "diag.json").write_text(json.dumps(diag, indent=2))
    print(f"probe: test {probe_out['test_mean']:.4f} +- {probe_out['test_std']:.4f} "
          f"({args.seeds} seeds), outputs in {out}")
    return 0


def _ablate_one(payload: tuple) -> dict:
    """One (method, k, seed) cell of the k-ablation table."""
    cfg_dict, method, k, seed = payload
    cfg = RunConfig.from_dict(cfg_dict)
    cfg.seed = seed
    dataset = build_dataset(cfg)
    settings = BgrlSettings(predictor_hidden=cfg.predictor_hidden,
                            use_projector=cfg.use_projector,
                            projector_hidden=cfg.projector_hidden)
    if method == "grace":
        cfg.grace.k = k
        trainer = GraceTrainer(dataset, cfg.encoder, cfg.augment, cfg.optim,
                               cfg.grace, seed=seed)
        state, records = trainer.train(metrics_every=1)
        params = state.params
    else:
        trainer = BgrlTrainer(dataset, cfg.encoder, cfg.augment, cfg.optim,
                              settings, seed=seed)
        state, records = trainer.train(metrics_every=1)
        params = state.online
    encoder = trainer.encoder
    probe = linear_probe(embed_frozen(encoder, params, dataset),
                         dataset.labels, dataset.splits, cfg.probe, seed)
    peak = max(r.peak_bytes for r in records) if records else 0
    return {"method": method, "k": k, "seed": seed,
            "test_accuracy": probe["test_accuracy"], "peak_bytes": peak}


def cmd_ablate_k(args) -> int:
    cfg = load_config_for_run(args)
    ks = []
    for item in args.k.split(","):
        item = item.strip()
        ks.append("all" if item == "all" else int(item))
    jobs = [(cfg.to_dict(), "grace", k, s) for k in ks for s in range(args.seeds)]
    jobs += [(cfg.to_dict(), "bgrl", None, s) for s in range(args.seeds)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            cells = list(pool.map(_ablate_one, jobs))
    else:
        cells = [_ablate_one(j) for j in jobs]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "k", "mean_acc", "std_acc", "peak_bytes"])
        for method, k in [("grace", k) for k in ks] + [("bgrl", None)]:
            accs = [c["test_accuracy"] for c in cells if c["method"] == method and c["k"] == k]
            peaks = [c["peak_bytes"] for c in cells if c["method"] == method and c["k"] == k]
            writer.writerow([method, k if k is not None else "-",
                             f"{np.mean(accs):.6f}", f"{np.std(accs):.6f}", max(peaks)])
    print(f"wrote {out}")
    return 0


def cmd_schedule_dump(args) -> int:
    sched = ScheduleConfig(eta_base=args.eta_base, n_total=args.n_total,
                           n_warmup=args.n_warmup, tau_base=args.tau_base)
    sched.validate()
    rows = [(i, learning_rate_at(i, sched), tau_at(i, sched))
            for i in range(0, args.n_total + 1, args.every)]
    if rows[-1][0] != args.n_total:
        rows.append((args.n_total, learning_rate_at(args.n_total, sched),
                     tau_at(args.n_total, sched)))
    target = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(target)
    writer.writerow(["i", "eta", "tau"])
    for row in rows:
        writer.writerow([row[0], f"{row[1]:.12g}", f"{row[2]:.12g}"])
    if args.out:
        target.close()
        print(f"wrote {args.out}")
    return 0


def bench_dataset(n: int, seed: int = 0, feature_dim: int = 16) -> Dataset:
    """SBM sized so the arc count grows linearly with the node count."""
    blocks = 4
    npb = n // blocks
    p_in = min(1.0, 6.0 / npb)
    p_out = min(1.0, 2.0 / max(n - npb, 1))
    return generate_sbm(blocks, npb, p_in, p_out, feature_dim, 0.5, seed)


def bench_peaks(n: int, k, seed: int = 0) -> dict:
    """Peak step footprints of both methods on a size-n linear-arc SBM."""
    from .augment import AugmentationConfig
    from .grace import GraceConfig
    from .nn import EncoderConfig

    ds = bench_dataset(n, seed=seed)
    enc = EncoderConfig(kind="gcn", layer_sizes=[32, 32], norm="none")
    aug = AugmentationConfig(0.1, 0.1, 0.1, 0.1)
    sched = ScheduleConfig(eta_base=1e-3, n_total=10, n_warmup=0)
    bgrl = BgrlTrainer(ds, enc, aug, sched, BgrlSettings(predictor_hidden=32), seed=seed)
    rec_b = bgrl.update_step(bgrl.init_state())
    grace = GraceTrainer(ds, enc, aug, sched,
                         GraceConfig(k=k, projector_hidden=32), seed=seed)
    rec_g = grace.update_step(grace.init_state())
    return {"n": n, "m": ds.graph.num_edges,
            "bgrl": rec_b.peak_bytes, "grace": rec_g.peak_bytes}


def cmd_bench_memory(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    model = CostModel()
    k = "all" if args.k == "all" else int(args.k)
    rows = []
    for n in sizes:
        peaks = bench_peaks(n, k)
        rows.append(("bgrl", n, peaks["m"], peaks["bgrl"]))
        rows.append(("grace", n, peaks["m"], peaks["grace"]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "n", "peak_bytes", "predicted_cost"])
        for method, n, m, peak in rows:
            writer.writerow([method, n, peak, f"{predict_cost(method, n, m, model):.1f}"])
    print(f"wrote {out}")
    return 0


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--method", choices=["bgrl", "grace", "random-init", "supervised", "semisup"])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--data", help="dataset directory (overrides config source)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--grace.k", dest="grace_k", help="negatives per node, or 'all'")
    p.add_argument("--grace.temperature", dest="grace_temperature", type=float)
    p.add_argument("--batch.labeled", dest="batch_labeled", type=int)
    p.add_argument("--batch.ratio", dest="batch_ratio", type=float)
    p.add_argument("--batch.aux-weight", dest="batch_aux_weight", type=float)
    p.add_argument("--fanout", help="comma-separated per-hop caps, e.g. 10,5")
    p.add_argument("--set", action="append", metavar="PATH=VALUE",
                   help="override any dotted config path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssgraph")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic SBM dataset to disk")
    p.add_argument("--sbm", required=True, metavar="BLOCKSxNODES")
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--signal", type=float, default=0.5)
    p.add_argument("--seed", type=int)
    p.add_argument("--train-frac", type=float, default=0.1)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train with one of the methods")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probe a frozen encoder checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--config", help="config JSON (default: next to ckpt)")
    p.add_argument("--probe", choices=["grid_full", "gd_fast"], default="grid_full")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--keep-splits", action="store_true",
                   help="probe on the dataset's own splits instead of re-splitting per seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-k", help="accuracy/memory sweep over negative counts")
    _add_train_flags(p)
    p.add_argument("--k", required=True, help="comma-separated k values (or 'all')")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ablate_k)

    p = sub.add_parser("schedule-dump", help="tabulate the lr/decay schedules")
    p.add_argument("--eta-base", type=float, default=5e-4)
    p.add_argument("--n-total", type=int, default=10_000)
    p.add_argument("--n-warmup", type=int, default=1_000)
    p.add_argument("--tau-base", type=float, default=0.99)
    p.add_argument("--every", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule_dump)

    p = sub.add_parser("bench-memory", help="measured vs predicted step footprints")
    p.add_argument("--sizes", default="256,512,1024,2048")
    p.add_argument("--k", default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_memory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ShapeError, StructureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except MemoryLimitError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: one JSON document, dotted-path overrides, and the
shipped hyperparameter presets for the standard benchmark graphs."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

from .augment import AugmentationConfig
from .errors import ConfigError
from .evaluate import ProbeConfig
from .grace import GraceConfig
from .minibatch import BatchSpec, FanoutSpec
from .nn import EncoderConfig
from .optim import ScheduleConfig

METHODS = ("bgrl", "grace", "random-init", "supervised", "semisup")


@dataclass
class SbmSpec:
    blocks: int = 4
    nodes_per_block: int = 100
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 16
    signal: float = 0.5
    seed: int = 0
    train_frac: float = 0.1
    val_frac: float = 0.1


@dataclass
class DataConfig:
    sbm: SbmSpec | None = None
    files: str | None = None        # dataset directory

    def validate(self):
        if (self.sbm is None) == (self.files is None):
            raise ConfigError("exactly one dataset source (data.sbm or data.files) is required")


@dataclass
class RunConfig:
    method: str = "bgrl"
    seed: int = 0
    out: str | None = None
    data: DataConfig = field(default_factory=lambda: DataConfig(sbm=SbmSpec()))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    optim: ScheduleConfig = field(default_factory=ScheduleConfig)
    predictor_hidden: int = 512
    use_projector: bool = False
    projector_hidden: int = 512
    grace: GraceConfig = field(default_factory=GraceConfig)
    batch: BatchSpec = field(default_factory=BatchSpec)
    fanout: FanoutSpec = field(default_factory=FanoutSpec)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    metrics_every: int = 50

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        self.data.validate()
        self.encoder.validate()
        self.augment.validate()
        self.optim.validate()
        self.probe.validate()
        if self.method == "grace":
            self.grace.validate()
        if self.method in ("supervised", "semisup"):
            self.batch.validate()
            self.fanout.validate()
        if self.predictor_hidden < 1 or self.projector_hidden < 1:
            raise ConfigError("predictor/projector hidden widths must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fanout"] = list(self.fanout.caps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        known = {
            "method", "seed", "out", "data", "encoder", "augment", "optim",
            "predictor_hidden", "use_projector", "projector_hidden", "grace",
            "batch", "fanout", "probe", "metrics_every",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for key in ("method", "seed", "out", "predictor_hidden", "use_projector",
                    "projector_hidden", "metrics_every"):
            if key in d:
                setattr(cfg, key, d[key])
        if "data" in d:
            data = d["data"]
            cfg.data = DataConfig(
                sbm=SbmSpec(**data["sbm"]) if data.get("sbm") else None,
                files=data.get("files"))
        if "encoder" in d:
            cfg.encoder = EncoderConfig(**d["encoder"])
        if "augment" in d:
            cfg.augment = AugmentationConfig(**d["augment"])
        if "optim" in d:
            cfg.optim = ScheduleConfig(**d["optim"])
        if "grace" in d:
            cfg.grace = GraceConfig(**d["grace"])
        if "batch" in d:
            cfg.batch = BatchSpec(**d["batch"])
        if "fanout" in d:
            caps = d["fanout"]
            cfg.fanout = FanoutSpec(caps=list(caps["caps"] if isinstance(caps, dict) else caps))
        if "probe" in d:
            cfg.probe = ProbeConfig(**d["probe"])
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def set_dotted(config: RunConfig, path: str, raw: str) -> RunConfig:
    """Apply one ``a.b.c=value`` override onto a dotted config path."""
    d = config.to_dict()
    parts = path.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"no config path {path!r}")
        node = node[p]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"no config path {path!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[leaf] = value
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# presets: augmentation probabilities, learning rates, widths, and norm
# choices for the standard benchmark graphs, as shipped
# ---------------------------------------------------------------------------

def _preset(pf1, pf2, pe1, pe2, eta, layers, pred_hidden, *, kind="gcn",
            norm="batch", weight_std=False, n_total=10_000, n_warmup=1_000):
    return {
        "encoder": {"kind": kind, "layer_sizes": layers, "activation": "prelu",
                    "norm": norm, "norm_decay": 0.99, "gat_heads": None,
                    "weight_standardization": weight_std},
        "augment": {"p_f1": pf1, "p_f2": pf2, "p_e1": pe1, "p_e2": pe2},
        "optim": {"eta_base": eta, "n_total": n_total, "n_warmup": n_warmup,
                  "tau_base": 0.99, "weight_decay": 1e-5},
        "predictor_hidden": pred_hidden,
    }


PRESETS: dict[str, dict] = {
    "wikics":       _preset(0.2, 0.1, 0.2, 0.3, 5e-4, [512, 256], 512),
    "am-computers": _preset(0.2, 0.1, 0.5, 0.4, 5e-4, [256, 128], 512),
    "am-photos":    _preset(0.1, 0.2, 0.4, 0.1, 1e-4, [512, 256], 512),
    "co-cs":        _preset(0.3, 0.4, 0.3, 0.2, 1e-5, [512, 256], 512),
    "co-phy":       _preset(0.1, 0.4, 0.4, 0.1, 1e-5, [256, 128], 512),
    "arxiv":        _preset(0.0, 0.0, 0.6, 0.6, 1e-2, [256, 256, 256], 256,
                            norm="layer", weight_std=True),
    "ppi":          _preset(0.25, 0.0, 0.30, 0.25, 5e-3, [512, 512, 512], 512,
                            kind="meanpool_skip", norm="layer",
                            n_total=20_000, n_warmup=2_000),
}


def apply_preset(config: RunConfig, name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    d = config.to_dict()
    for key, value in PRESETS[name].items():
        d[key] = copy.deepcopy(value)
    return RunConfig.from_dict(d)

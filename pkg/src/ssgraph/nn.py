"""Parameter sets, initialization, normalization layers, and the encoders.

Three encoder families share one functional convention: an encoder object is
stateless, ``init_params(seed)`` draws a fresh ParamSet, and
``forward(params, view, train)`` runs the computation on an augmented (or
identity) view. All trainable state lives in the ParamSet, including batch
norm running statistics (stored as non-trainable entries so they ride along
with checkpointing and moving-average updates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .augment import View
from .errors import ConfigError, NumericError, StructureError
from .storage import read_checkpoint, write_checkpoint
from .tensor import Tensor

NORM_EPS = 1e-5
PRELU_INIT = 0.25


class ParamSet:
    """Ordered name -> tensor map with paired gradient buffers.

    Non-trainable entries (running statistics) participate in copies,
    checkpoints, and moving-average updates but never receive gradients.
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self.step = 0

    def add(self, name: str, array: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise StructureError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array), requires_grad=trainable)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def trainable_items(self):
        return [(n, t) for n, t in self._entries.items() if t.requires_grad]

    def zero_grads(self):
        for t in self._entries.values():
            t.grad = None

    def merged_with(self, other: "ParamSet") -> "ParamSet":
        out = ParamSet()
        for n, t in list(self.items()) + list(other.items()):
            out.add(n, t.data, trainable=t.requires_grad)
        return out

    def subset(self, prefix: str) -> "ParamSet":
        out = ParamSet()
        for n, t in self.items():
            if n.startswith(prefix):
                out.add(n, t.data.copy(), trainable=t.requires_grad)
        return out

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for n, t in self.items():
            out.add(n, t.data.copy(), trainable=t.requires_grad)
        out.step = self.step
        return out

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet()
        for n, t in self.items():
            out.add(n, t.data.astype(dtype), trainable=t.requires_grad)
        return out

    def load_values(self, values: dict[str, np.ndarray]):
        for n, t in self.items():
            if n not in values:
                raise StructureError(f"missing parameter {n!r} in checkpoint")
            arr = np.asarray(values[n], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise StructureError(f"shape mismatch for {n!r}: {arr.shape} vs {t.data.shape}")
            t.data = arr
        return self

    def save(self, path):
        write_checkpoint(path, {n: t.data for n, t in self.items()})

    def load(self, path):
        return self.load_values(read_checkpoint(path))


def ema_update(target: ParamSet, online: ParamSet, tau: float) -> ParamSet:
    """target <- tau * target + (1 - tau) * online, matched by name.

    tau=1 and tau=0 short-circuit so the endpoints are byte-exact.
    """
    if not (0.0 <= tau <= 1.0):
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    for name, t in target.items():
        if name not in online:
            raise StructureError(f"target parameter {name!r} has no online counterpart")
        o = online[name]
        if o.data.shape != t.data.shape:
            raise StructureError(f"shape mismatch for {name!r}")
        if tau == 1.0:
            continue
        if tau == 0.0:
            t.data = o.data.copy()
        else:
            t.data = tau * t.data + (1.0 - tau) * o.data
    return target


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float32) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape if shape is not None else (fan_in, fan_out)).astype(dtype)


def init_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


# ---------------------------------------------------------------------------
# norms and activations
# ---------------------------------------------------------------------------

def batch_norm(x: Tensor, params: ParamSet, prefix: str, decay: float, train: bool) -> Tensor:
    scale_t, shift_t = params[f"{prefix}norm_scale"], params[f"{prefix}norm_shift"]
    rm, rv = params[f"{prefix}running_mean"], params[f"{prefix}running_var"]
    if train:
        mu = T.tmean(x, axis=0, keepdims=True)
        xc = T.sub(x, mu)
        var = T.tmean(T.square(xc), axis=0, keepdims=True)
        xhat = T.div(xc, T.sqrt(T.add(var, Tensor(np.asarray(NORM_EPS, dtype=x.dtype)))))
        rm.data = decay * rm.data + (1.0 - decay) * mu.data[0].astype(rm.data.dtype)
        rv.data = decay * rv.data + (1.0 - decay) * var.data[0].astype(rv.data.dtype)
    else:
        denom = np.sqrt(rv.data + NORM_EPS).astype(x.dtype)
        xhat = T.div(T.sub(x, Tensor(rm.data.astype(x.dtype))), Tensor(denom))
    return T.add(T.mul(xhat, scale_t), shift_t)


def layer_norm(x: Tensor, params: ParamSet, prefix: str) -> Tensor:
    mu = T.tmean(x, axis=1, keepdims=True)
    xc = T.sub(x, mu)
    var = T.tmean(T.square(xc), axis=1, keepdims=True)
    xhat = T.div(xc, T.sqrt(T.add(var, Tensor(np.asarray(NORM_EPS, dtype=x.dtype)))))
    return T.add(T.mul(xhat, params[f"{prefix}norm_scale"]), params[f"{prefix}norm_shift"])


def apply_norm(x: Tensor, kind: str, params: ParamSet, prefix: str, decay: float, train: bool) -> Tensor:
    if kind == "none":
        return x
    if kind == "batch":
        return batch_norm(x, params, prefix, decay, train)
    if kind == "layer":
        return layer_norm(x, params, prefix)
    raise ConfigError(f"unknown norm kind {kind!r}")


def apply_activation(x: Tensor, kind: str, params: ParamSet, prefix: str) -> Tensor:
    if kind == "relu":
        return T.relu(x)
    if kind == "elu":
        return T.elu(x)
    if kind == "prelu":
        return T.prelu(x, params[f"{prefix}prelu"])
    if kind == "linear":
        return x
    raise ConfigError(f"unknown activation {kind!r}")


def _add_norm_params(params: ParamSet, prefix: str, kind: str, width: int, dtype):
    if kind == "none":
        return
    params.add(f"{prefix}norm_scale", np.ones(width, dtype=dtype))
    params.add(f"{prefix}norm_shift", np.zeros(width, dtype=dtype))
    if kind == "batch":
        params.add(f"{prefix}running_mean", np.zeros(width, dtype=dtype), trainable=False)
        params.add(f"{prefix}running_var", np.ones(width, dtype=dtype), trainable=False)


def _add_activation_params(params: ParamSet, prefix: str, kind: str, dtype):
    if kind == "prelu":
        params.add(f"{prefix}prelu", np.full(1, PRELU_INIT, dtype=dtype))


def standardize_weight(w: Tensor) -> Tensor:
    """Per-output-unit standardization of a (fan_in, fan_out) weight."""
    mu = T.tmean(w, axis=0, keepdims=True)
    xc = T.sub(w, mu)
    var = T.tmean(T.square(xc), axis=0, keepdims=True)
    return T.div(xc, T.sqrt(T.add(var, Tensor(np.asarray(NORM_EPS, dtype=w.dtype)))))


# ---------------------------------------------------------------------------
# encoder configuration
# ---------------------------------------------------------------------------

@dataclass
class EncoderConfig:
    kind: str = "gcn"                       # gcn | meanpool_skip | gat
    layer_sizes: list[int] = field(default_factory=lambda: [512, 256])
    activation: str = "prelu"               # prelu | elu | relu | linear
    norm: str = "batch"                     # none | batch | layer
    norm_decay: float = 0.99
    gat_heads: list[int] | None = None      # per-layer head counts (gat only)
    weight_standardization: bool = False

    def validate(self):
        if self.kind not in ("gcn", "meanpool_skip", "gat"):
            raise ConfigError(f"unknown encoder kind {self.kind!r}")
        if not self.layer_sizes:
            raise ConfigError("layer_sizes must be nonempty")
        if self.kind == "gat":
            if not self.gat_heads or len(self.gat_heads) != len(self.layer_sizes):
                raise ConfigError("gat_heads must match layer_sizes in length")
        if self.kind == "meanpool_skip":
            if len(self.layer_sizes) != 3:
                raise ConfigError("meanpool_skip requires exactly 3 layers")
            if self.layer_sizes[0] != self.layer_sizes[1]:
                raise ConfigError("meanpool_skip needs equal widths in layers 1 and 2")

    @property
    def embedding_dim(self) -> int:
        return self.layer_sizes[-1]


def _maybe_standardized(params: ParamSet, name: str, enabled: bool) -> Tensor:
    w = params[name]
    return standardize_weight(w) if enabled else w


class GcnEncoder:
    """Stack of graph convolutions over the spectrally normalized adjacency."""

    kind = "gcn"

    def __init__(self, config: EncoderConfig, in_dim: int):
        config.validate()
        self.config = config
        self.in_dim = in_dim

    def init_params(self, seed, dtype=np.float32, prefix: str = "encoder.") -> ParamSet:
        rng = init_rng(seed)
        params = ParamSet()
        width_in = self.in_dim
        for l, width_out in enumerate(self.config.layer_sizes):
            p = f"{prefix}layer{l}."
            params.add(f"{p}weight", glorot(rng, width_in, width_out, dtype=dtype))
            params.add(f"{p}bias", np.zeros(width_out, dtype=dtype))
            _add_norm_params(params, p, self.config.norm, width_out, dtype)
            _add_activation_params(params, p, self.config.activation, dtype)
            width_in = width_out
        return params

    def forward(self, params: ParamSet, view: View, train: bool, prefix: str = "encoder.") -> Tensor:
        cfg = self.config
        ng = view.normalized("symmetric")
        dtype = params[f"{prefix}layer0.weight"].dtype
        mat, mat_t = ng.matrix(dtype)
        h: Tensor = Tensor(view.features.astype(dtype))
        for l in range(len(cfg.layer_sizes)):
            p = f"{prefix}layer{l}."
            w = _maybe_standardized(params, f"{p}weight", cfg.weight_standardization)
            h = T.spmm(mat, mat_t, h)
            h = T.add(T.matmul(h, w), params[f"{p}bias"])
            h = apply_norm(h, cfg.norm, params, p, cfg.norm_decay, train)
            h = apply_activation(h, cfg.activation, params, p)
        return h


class MeanPoolSkipEncoder:
    """Three mean-pooling layers with input-projection skip connections.

    With MP_i(x) the row-normalized aggregation followed by the i-th linear
    map, norm, and activation, the stages are

        h1 = act(MP_1(x))
        h2 = act(MP_2(h1 + x @ skip1))
        out = act(MP_3(h2 + h1 + x @ skip2))
    """

    kind = "meanpool_skip"

    def __init__(self, config: EncoderConfig, in_dim: int):
        config.validate()
        if config.kind != "meanpool_skip":
            raise ConfigError("config.kind must be meanpool_skip")
        self.config = config
        self.in_dim = in_dim

    def init_params(self, seed, dtype=np.float32, prefix: str = "encoder.") -> ParamSet:
        rng = init_rng(seed)
        params = ParamSet()
        sizes = self.config.layer_sizes
        width_in = self.in_dim
        for l, width_out in enumerate(sizes):
            p = f"{prefix}layer{l}."
            params.add(f"{p}weight", glorot(rng, width_in, width_out, dtype=dtype))
            params.add(f"{p}bias", np.zeros(width_out, dtype=dtype))
            _add_norm_params(params, p, self.config.norm, width_out, dtype)
            _add_activation_params(params, p, self.config.activation, dtype)
            width_in = width_out
        params.add(f"{prefix}skip1.weight", glorot(rng, self.in_dim, sizes[0], dtype=dtype))
        params.add(f"{prefix}skip2.weight", glorot(rng, self.in_dim, sizes[1], dtype=dtype))
        return params

    def _mp(self, params, prefix, l, mat, mat_t, h, train):
        cfg = self.config
        p = f"{prefix}layer{l}."
        w = _maybe_standardized(params, f"{p}weight", cfg.weight_standardization)
        h = T.spmm(mat, mat_t, h)
        h = T.add(T.matmul(h, w), params[f"{p}bias"])
        h = apply_norm(h, cfg.norm, params, p, cfg.norm_decay, train)
        return apply_activation(h, cfg.activation, params, p)

    def forward(self, params: ParamSet, view: View, train: bool, prefix: str = "encoder.") -> Tensor:
        cfg = self.config
        ng = view.normalized("row")
        dtype = params[f"{prefix}layer0.weight"].dtype
        mat, mat_t = ng.matrix(dtype)
        x = Tensor(view.features.astype(dtype))

        act = lambda h, l: apply_activation(h, cfg.activation, params, f"{prefix}layer{l}.")
        h1 = act(self._mp(params, prefix, 0, mat, mat_t, x, train), 0)
        skip1 = T.matmul(x, params[f"{prefix}skip1.weight"])
        h2 = act(self._mp(params, prefix, 1, mat, mat_t, T.add(h1, skip1), train), 1)
        skip2 = T.matmul(x, params[f"{prefix}skip2.weight"])
        h3_in = T.add(T.add(h2, h1), skip2)
        return act(self._mp(params, prefix, 2, mat, mat_t, h3_in, train), 2)


class GatEncoder:
    """Multi-head neighborhood attention with self-loops.

    Intermediate layers concatenate head outputs and add a learned linear
    skip projection of the layer input; the final layer averages heads.
    """

    kind = "gat"
    leaky_slope = 0.2

    def __init__(self, config: EncoderConfig, in_dim: int):
        config.validate()
        if config.kind != "gat":
            raise ConfigError("config.kind must be gat")
        self.config = config
        self.in_dim = in_dim

    def layer_widths(self) -> list[int]:
        """Output width per layer: heads concatenated except at the last."""
        cfg = self.config
        widths = []
        for l, (d, h) in enumerate(zip(cfg.layer_sizes, cfg.gat_heads)):
            last = l == len(cfg.layer_sizes) - 1
            widths.append(d if last else d * h)
        return widths

    def init_params(self, seed, dtype=np.float32, prefix: str = "encoder.") -> ParamSet:
        rng = init_rng(seed)
        cfg = self.config
        params = ParamSet()
        widths = self.layer_widths()
        width_in = self.in_dim
        for l, (d, heads) in enumerate(zip(cfg.layer_sizes, cfg.gat_heads)):
            p = f"{prefix}layer{l}."
            for h in range(heads):
                hp = f"{p}head{h}."
                params.add(f"{hp}weight", glorot(rng, width_in, d, dtype=dtype))
                params.add(f"{hp}bias", np.zeros(d, dtype=dtype))
                att = glorot(rng, 2 * d, 1, shape=(2 * d,), dtype=dtype)
                params.add(f"{hp}att_src", att[:d].copy())
                params.add(f"{hp}att_dst", att[d:].copy())
            last = l == len(cfg.layer_sizes) - 1
            if not last:
                params.add(f"{p}skip.weight", glorot(rng, width_in, widths[l], dtype=dtype))
            _add_norm_params(params, p, cfg.norm, widths[l], dtype)
            _add_activation_params(params, p, cfg.activation, dtype)
            width_in = widths[l]
        return params

    def forward(self, params: ParamSet, view: View, train: bool, prefix: str = "encoder.",
                record_attention: list | None = None) -> Tensor:
        cfg = self.config
        ng = view.normalized("row")        # structure only: arcs of A + I
        n = view.graph.num_nodes
        row_ids = np.repeat(np.arange(n), np.diff(ng.row_offsets))
        col_ids = ng.col_indices
        dtype = params[f"{prefix}layer0.head0.weight"].dtype
        h: Tensor = Tensor(view.features.astype(dtype))

        for l, (d, heads) in enumerate(zip(cfg.layer_sizes, cfg.gat_heads)):
            p = f"{prefix}layer{l}."
            last = l == len(cfg.layer_sizes) - 1
            head_outs = []
            for hd in range(heads):
                hp = f"{p}head{hd}."
                w = _maybe_standardized(params, f"{hp}weight", cfg.weight_standardization)
                wh = T.matmul(h, w)
                # e_ij = leaky_relu(att_src . wh_i + att_dst . wh_j), one logit per arc
                logit_src = T.tsum(T.mul(wh, params[f"{hp}att_src"]), axis=1, keepdims=True)
                logit_dst = T.tsum(T.mul(wh, params[f"{hp}att_dst"]), axis=1, keepdims=True)
                e = T.leaky_relu(T.add(T.gather_rows(logit_src, row_ids),
                                       T.gather_rows(logit_dst, col_ids)), self.leaky_slope)
                alpha = T.segment_softmax(e, row_ids, n)      # (n_arcs, 1)
                if record_attention is not None:
                    record_attention.append({
                        "layer": l, "head": hd, "alpha": alpha.data[:, 0].copy(),
                        "row_offsets": ng.row_offsets,
                    })
                messages = T.mul(T.gather_rows(wh, col_ids), alpha)
                head_outs.append(T.add(T.segment_sum(messages, row_ids, n), params[f"{hp}bias"]))
            if last:
                agg = head_outs[0]
                for other in head_outs[1:]:
                    agg = T.add(agg, other)
                out = T.scale(agg, 1.0 / heads)
            else:
                out = T.concat_cols(head_outs)
                out = T.add(out, T.matmul(h, params[f"{p}skip.weight"]))
            out = apply_norm(out, cfg.norm, params, p, cfg.norm_decay, train)
            h = apply_activation(out, cfg.activation, params, p)
        return h


def build_encoder(config: EncoderConfig, in_dim: int):
    config.validate()
    cls = {"gcn": GcnEncoder, "meanpool_skip": MeanPoolSkipEncoder, "gat": GatEncoder}[config.kind]
    return cls(config, in_dim)


# ---------------------------------------------------------------------------
# small MLPs: predictor, projector, classifier head
# ---------------------------------------------------------------------------

@dataclass
class MlpConfig:
    hidden: int = 512
    norm: str = "none"          # none | batch
    activation: str = "prelu"
    norm_decay: float = 0.99


def mlp_init(rng_or_seed, in_dim: int, cfg: MlpConfig, out_dim: int,
             dtype=np.float32, prefix: str = "predictor.") -> ParamSet:
    rng = rng_or_seed if isinstance(rng_or_seed, np.random.Generator) else init_rng(rng_or_seed)
    params = ParamSet()
    params.add(f"{prefix}layer0.weight", glorot(rng, in_dim, cfg.hidden, dtype=dtype))
    params.add(f"{prefix}layer0.bias", np.zeros(cfg.hidden, dtype=dtype))
    _add_norm_params(params, f"{prefix}layer0.", cfg.norm, cfg.hidden, dtype)
    _add_activation_params(params, f"{prefix}layer0.", cfg.activation, dtype)
    params.add(f"{prefix}layer1.weight", glorot(rng, cfg.hidden, out_dim, dtype=dtype))
    params.add(f"{prefix}layer1.bias", np.zeros(out_dim, dtype=dtype))
    return params


def mlp_forward(params: ParamSet, x: Tensor, cfg: MlpConfig, train: bool,
                prefix: str = "predictor.") -> Tensor:
    p0 = f"{prefix}layer0."
    h = T.add(T.matmul(x, params[f"{p0}weight"]), params[f"{p0}bias"])
    h = apply_norm(h, cfg.norm, params, p0, cfg.norm_decay, train)
    h = apply_activation(h, cfg.activation, params, p0)
    return T.add(T.matmul(h, params[f"{prefix}layer1.weight"]), params[f"{prefix}layer1.bias"])


def linear_head_init(rng_or_seed, in_dim: int, num_classes: int,
                     dtype=np.float32, prefix: str = "head.") -> ParamSet:
    rng = rng_or_seed if isinstance(rng_or_seed, np.random.Generator) else init_rng(rng_or_seed)
    params = ParamSet()
    params.add(f"{prefix}weight", glorot(rng, in_dim, num_classes, dtype=dtype))
    params.add(f"{prefix}bias", np.zeros(num_classes, dtype=dtype))
    return params


def linear_head_forward(params: ParamSet, x: Tensor, prefix: str = "head.") -> Tensor:
    return T.add(T.matmul(x, params[f"{prefix}weight"]), params[f"{prefix}bias"])


def check_finite_loss(loss: Tensor, context: str):
    if not np.isfinite(loss.data).all():
        raise NumericError(f"non-finite loss in {context}: {loss.data}")

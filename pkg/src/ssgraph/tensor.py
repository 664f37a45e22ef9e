"""Recorded-operation reverse-mode gradient engine over numpy arrays.

Every operation in the fixed vocabulary below builds a ``Tensor`` whose
``_vjp`` closure knows how to push an output gradient back to the operation's
parents. ``backward`` walks the recorded graph in reverse topological order
and accumulates gradients into leaf tensors (parameters).

Two global switches live here:

* ``no_grad()`` — suspends recording, used for target-encoder forwards and
  frozen evaluation.
* ``tracker`` — a deterministic byte counter over live tensor buffers
  (values and gradients). CPython's reference counting frees buffers at
  well-defined points, so the observed peak is reproducible run-to-run.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError


class AllocationTracker:
    """Counts bytes of live tensor buffers; ``peak`` is resettable."""

    __slots__ = ("current", "peak")

    def __init__(self):
        self.current = 0
        self.peak = 0

    def acquire(self, nbytes: int):
        self.current += nbytes
        if self.current > self.peak:
            self.peak = self.current

    def release(self, nbytes: int):
        self.current -= nbytes

    def reset_peak(self):
        self.peak = self.current


tracker = AllocationTracker()


@contextmanager
def measure_peak_bytes():
    """Measure peak live tensor bytes inside the block.

    Yields a dict whose "peak" entry is filled in on exit. Counter-based and
    deterministic; this is not OS RSS.
    """
    tracker.reset_peak()
    out = {"peak": 0}
    try:
        yield out
    finally:
        out["peak"] = tracker.peak


def _track_array(arr: np.ndarray):
    tracker.acquire(arr.nbytes)
    weakref.finalize(arr, tracker.release, arr.nbytes)


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    saved = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


class Tensor:
    """A numpy array plus an optional gradient buffer and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp
        _track_array(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _out(data: np.ndarray, parents, vjp) -> Tensor:
    """Wrap an op result, recording the vjp only when some parent needs it."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), vjp)
    return Tensor(data)


def _zeros_grad(t: Tensor) -> np.ndarray:
    g = np.zeros_like(t.data)
    _track_array(g)
    return g


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``grad`` for every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    # Iterative topological sort over tensors that require grad.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    seed = np.ones_like(loss.data)
    _track_array(seed)
    loss.grad = seed
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = _zeros_grad(parent)
            parent.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# dense elementwise / reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _out(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _out(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _out(ad * bd, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return _out(ad / bd, (a, b), vjp)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return (g * c,)

    return _out(a.data * c, (a,), vjp)


def neg(a) -> Tensor:
    return scale(a, -1.0)


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def vjp(g):
        return (g * p * ad ** (p - 1.0),)

    return _out(ad ** p, (a,), vjp)


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def vjp(g):
        return (g * 2.0 * ad,)

    return _out(ad * ad, (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _out(out, (a,), vjp)


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def vjp(g):
        return (g / ad,)

    return _out(np.log(ad), (a,), vjp)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _out(out, (a,), vjp)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    in_shape = a.data.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        gg = g
        if not keepdims:
            for i in sorted(a_ % len(in_shape) for a_ in ax):
                gg = np.expand_dims(gg, i)
        return (np.broadcast_to(gg, in_shape).copy(),)

    return _out(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for i in ax:
            n *= a.data.shape[i]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return _out(np.where(mask, a.data, 0.0).astype(a.data.dtype), (a,), vjp)


def leaky_relu(a, alpha: float = 0.2) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (np.where(mask, g, alpha * g),)

    return _out(np.where(mask, a.data, alpha * a.data), (a,), vjp)


def elu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, np.exp(np.minimum(a.data, 0.0)) - 1.0)

    def vjp(g):
        return (np.where(mask, g, g * (out + 1.0)),)

    return _out(out.astype(a.data.dtype), (a,), vjp)


def prelu(a, slope: Tensor) -> Tensor:
    """PReLU with a single learned slope (shape-(1,) tensor)."""
    a = as_tensor(a)
    mask = a.data > 0
    s = float(slope.data.reshape(-1)[0])
    neg_part = np.where(mask, 0.0, a.data)

    def vjp(g):
        ga = np.where(mask, g, s * g)
        gs = np.array([(g * neg_part).sum()], dtype=slope.data.dtype)
        return ga, gs

    return _out(np.where(mask, a.data, s * a.data), (a, slope), vjp)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul shapes {ad.shape} x {bd.shape}")

    def vjp(g):
        return g @ bd.T, ad.T @ g

    return _out(ad @ bd, (a, b), vjp)


def matmul_t(a, b) -> Tensor:
    """a @ b.T with both operands differentiable."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        return g @ bd, g.T @ ad

    return _out(ad @ bd.T, (a, b), vjp)


def spmm(mat: sp.csr_matrix, mat_t: sp.csr_matrix, x) -> Tensor:
    """Sparse @ dense; ``mat_t`` is the precomputed transpose for the vjp."""
    x = as_tensor(x)

    def vjp(g):
        return (mat_t @ g,)

    return _out(mat @ x.data, (x,), vjp)


def scatter_rows_sum(idx: np.ndarray, rows: np.ndarray, num_targets: int) -> np.ndarray:
    """out[t] = sum of rows[i] over i with idx[i] = t (sort + reduceat;
    much faster than np.add.at for large index arrays)."""
    out = np.zeros((num_targets,) + rows.shape[1:], dtype=rows.dtype)
    if len(idx) == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    sorted_rows = rows[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    out[sorted_idx[starts]] = np.add.reduceat(sorted_rows, starts, axis=0)
    return out


def gather_rows(x, idx: np.ndarray) -> Tensor:
    x = as_tensor(x)
    num_rows = x.data.shape[0]

    def vjp(g):
        return (scatter_rows_sum(idx, g, num_rows),)

    return _out(x.data[idx], (x,), vjp)


def gather_dot(u, v, idx: np.ndarray) -> Tensor:
    """out[i, c] = <u[i], v[idx[i, c]]> for an (N, k) index matrix."""
    u, v = as_tensor(u), as_tensor(v)
    ud, vd = u.data, v.data
    picked = vd[idx]                      # (N, k, D)
    out = np.einsum("nd,nkd->nk", ud, picked)

    def vjp(g):
        gu = np.einsum("nk,nkd->nd", g, picked)
        contrib = (g[:, :, None] * ud[:, None, :]).reshape(-1, ud.shape[1])
        gv = scatter_rows_sum(idx.reshape(-1), contrib, vd.shape[0])
        return gu, gv

    return _out(out, (u, v), vjp)


def concat_cols(parts: list[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.data.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(parts)))

    return _out(np.concatenate([p.data for p in parts], axis=1), tuple(parts), vjp)


# ---------------------------------------------------------------------------
# neighborhood (segment) ops over CSR arc lists
# ---------------------------------------------------------------------------

def segment_softmax(logits, row_ids: np.ndarray, num_rows: int) -> Tensor:
    """Softmax over each row's arcs. ``logits``: (n_arcs,) or (n_arcs, H)."""
    logits = as_tensor(logits)
    ld = logits.data
    two_d = ld.ndim == 2
    cols = ld.shape[1] if two_d else 1
    flat = ld if two_d else ld[:, None]

    seg_max = np.full((num_rows, cols), -np.inf, dtype=flat.dtype)
    np.maximum.at(seg_max, row_ids, flat)
    e = np.exp(flat - seg_max[row_ids])
    denom = np.zeros((num_rows, cols), dtype=flat.dtype)
    np.add.at(denom, row_ids, e)
    alpha = e / denom[row_ids]

    def vjp(g):
        gf = g if two_d else g[:, None]
        dot = np.zeros((num_rows, cols), dtype=gf.dtype)
        np.add.at(dot, row_ids, alpha * gf)
        gl = alpha * (gf - dot[row_ids])
        return (gl if two_d else gl[:, 0],)

    return _out(alpha if two_d else alpha[:, 0], (logits,), vjp)


def segment_sum(values, row_ids: np.ndarray, num_rows: int) -> Tensor:
    """out[r] = sum of values over arcs with row id r. values: (n_arcs, D)."""
    values = as_tensor(values)
    vd = values.data
    out = np.zeros((num_rows,) + vd.shape[1:], dtype=vd.dtype)
    np.add.at(out, row_ids, vd)

    def vjp(g):
        return (g[row_ids],)

    return _out(out, (values,), vjp)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy_logits(logits, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels under row-wise softmax logits."""
    logits = as_tensor(logits)
    ld = logits.data
    if ld.ndim != 2 or len(labels) != ld.shape[0]:
        raise ShapeError(f"cross entropy: logits {ld.shape} vs {len(labels)} labels")
    n = ld.shape[0]
    shifted = ld - ld.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    nll = logz - shifted[np.arange(n), labels]
    softmax = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)

    def vjp(g):
        gl = softmax.copy()
        gl[np.arange(n), labels] -= 1.0
        return (gl * (g / n),)

    return _out(np.asarray(nll.mean(), dtype=ld.dtype), (logits,), vjp)


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------

def l2_normalize_rows(x, eps: float = 1e-8) -> Tensor:
    """Rows scaled to unit length; zero rows are left near zero via eps."""
    x = as_tensor(x)
    norms = sqrt(tsum(square(x), axis=1, keepdims=True))
    return div(x, add(norms, Tensor(np.asarray(eps, dtype=x.dtype))))


def cosine_rows(a, b, eps: float = 1e-8) -> Tensor:
    """Row-wise cosine similarity, eps-guarded denominators. Returns (N, 1)."""
    a, b = as_tensor(a), as_tensor(b)
    dots = tsum(mul(a, b), axis=1, keepdims=True)
    na = sqrt(tsum(square(a), axis=1, keepdims=True))
    nb = sqrt(tsum(square(b), axis=1, keepdims=True))
    denom = add(mul(na, nb), Tensor(np.asarray(eps, dtype=a.dtype)))
    return div(dots, denom)

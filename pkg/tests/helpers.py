"""Shared test utilities: independent dense oracles and a finite-difference
gradient checker. Everything here deliberately avoids the package's tape
engine internals so it can serve as a second route."""

from __future__ import annotations

import numpy as np

from ssgraph.graphs import Graph, graph_from_arcs
from ssgraph.nn import ParamSet
from ssgraph.tensor import backward


def random_graph(n: int, edge_prob: float, rng: np.random.Generator) -> Graph:
    """Random symmetric graph without self-loops."""
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < edge_prob
    return graph_from_arcs(n, iu[keep], ju[keep])


def dense_adjacency(graph: Graph) -> np.ndarray:
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    for i in range(graph.num_nodes):
        a[i, graph.neighbors(i)] = 1.0
    return a


def dense_normalized(graph: Graph, kind: str) -> np.ndarray:
    """Oracle for the normalized adjacency with self-loops."""
    a_hat = dense_adjacency(graph) + np.eye(graph.num_nodes)
    d_hat = a_hat.sum(axis=1)
    if kind == "symmetric":
        d_inv_sqrt = np.diag(1.0 / np.sqrt(d_hat))
        return d_inv_sqrt @ a_hat @ d_inv_sqrt
    return np.diag(1.0 / d_hat) @ a_hat


def permuted_graph(graph: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes: new id of node v is perm[v]."""
    edges = graph.undirected_edges()
    return graph_from_arcs(graph.num_nodes, perm[edges[:, 0]], perm[edges[:, 1]])


def fd_gradients(loss_fn, params: ParamSet, h: float = 1e-3) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar loss over every trainable entry.

    ``loss_fn`` must be a pure function of the current parameter values.
    """
    grads = {}
    for name, tensor in params.trainable_items():
        flat = tensor.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads[name] = g.reshape(tensor.data.shape)
    return grads


def analytic_gradients(loss_builder, params: ParamSet) -> tuple[float, dict[str, np.ndarray]]:
    params.zero_grads()
    loss = loss_builder()
    backward(loss)
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
             for name, t in params.trainable_items()}
    value = float(loss.data)
    params.zero_grads()
    return value, grads


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    """Worst-case elementwise relative error with an absolute floor."""
    worst = 0.0
    for name in analytic:
        a, f = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst


def check_gradients(loss_builder, params: ParamSet, h: float = 1e-3,
                    tol: float = 1e-3) -> float:
    """FD-vs-analytic agreement; returns the worst relative error."""
    _, analytic = analytic_gradients(loss_builder, params)
    numeric = fd_gradients(lambda: float(loss_builder().data), params, h=h)
    err = max_relative_error(analytic, numeric)
    assert err < tol, f"gradient mismatch: worst relative error {err:.3e}"
    return err

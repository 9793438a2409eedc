"""Differentiable self-supervised losses for the three problems.

Every loss takes a probability column ``p`` (Tensor or array, one row per node
of the batch) and returns the mean over the graphs of the batch.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import LOG_EPS, Tensor
from .errors import ConfigError, ShapeError
from .graph import Graph, GraphBatch


def _prep(p, g) -> tuple[Tensor, GraphBatch]:
    batch = g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])
    p = p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=np.float64).reshape(-1, 1))
    if p.shape != (batch.num_nodes, 1):
        raise ShapeError(f"p has shape {p.shape}, expected ({batch.num_nodes}, 1)")
    return p, batch


def _graph_mean(per_node: Tensor, batch: GraphBatch) -> Tensor:
    per_graph = ad.spmm(batch.segments, per_node)
    return ad.mean(per_graph)


def per_graph(loss_fn, p, g, **kw) -> np.ndarray:
    """Per-graph loss values (no gradient)."""
    p, batch = _prep(p, g)
    return np.array([
        loss_fn(p.value[batch.offsets[i]:batch.offsets[i + 1]], gr, **kw).item()
        for i, gr in enumerate(batch.graphs)
    ])


def loss_mcut(p, g) -> Tensor:
    """sum over edges of y_i y_j with y = 2p - 1 (equals 1/2 y^T A y)."""
    p, batch = _prep(p, g)
    y = ad.add_scalar(ad.scale(p, 2.0), -1.0)
    return _graph_mean(ad.scale(ad.mul(y, ad.spmm(batch.A, y)), 0.5), batch)


def complement_apply(p: Tensor, batch: GraphBatch) -> Tensor:
    """Block-wise (J - I - A) p without forming the complement."""
    totals = ad.spmm(ad.transpose_of(batch.segments), ad.spmm(batch.segments, p))
    return ad.sub(ad.sub(totals, p), ad.spmm(batch.A, p))


def loss_mclique(p, g, beta: float = 1.0) -> Tensor:
    """-p^T A p + beta p^T Abar p."""
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    p, batch = _prep(p, g)
    inside = ad.scale(ad.mul(p, ad.spmm(batch.A, p)), -1.0)
    missing = ad.scale(ad.mul(p, complement_apply(p, batch)), beta)
    return _graph_mean(ad.add(inside, missing), batch)


def loss_mds(p, g, beta: float = 1.0, eps: float = LOG_EPS) -> Tensor:
    """||p||_1 + beta * sum_v prod_{u in N[v]} (1 - p_u), products taken in log space."""
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    p, batch = _prep(p, g)
    pc = ad.clamp(p, eps, 1.0 - eps)
    log_miss = ad.log(ad.add_scalar(ad.scale(pc, -1.0), 1.0))
    uncovered = ad.exp(ad.spmm(batch.A_closed, log_miss))
    return _graph_mean(ad.add(ad.abs_(p), ad.scale(uncovered, beta)), batch)


def calibrate_mds_beta(graphs) -> float:
    """beta that makes both MDS terms equal at p = 1/2, summed over ``graphs``."""
    l1 = sum(0.5 * g.n for g in graphs)
    l2 = sum(float(np.sum(0.5 ** (g.degrees + 1.0))) for g in graphs)
    return l1 / l2


def resolve_beta(problem: str, beta: float | None, graphs) -> float:
    if beta is not None:
        return float(beta)
    return calibrate_mds_beta(graphs) if problem == "mds" else 1.0


LOSSES = {"mcut": loss_mcut, "mclique": loss_mclique, "mds": loss_mds}


def problem_loss(problem: str, p, g, beta: float | None = 1.0) -> Tensor:
    beta = 1.0 if beta is None else beta
    if problem == "mcut":
        return loss_mcut(p, g)
    if problem == "mclique":
        return loss_mclique(p, g, beta)
    if problem == "mds":
        return loss_mds(p, g, beta)
    raise ConfigError(f"unknown problem {problem!r}")


def loss_value(problem: str, p, g: Graph, beta: float = 1.0) -> float:
    return problem_loss(problem, p, g, beta).item()

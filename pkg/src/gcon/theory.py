"""Numerical checks of the low-pass dominance result for non-decoupled filter banks.

With a non-negative signal, identity m and filters whose smallest diffusion
power is K, every aggregation response approaches the stationary value
||x||_1 d[v] / ||d||_1 while every band-pass response vanishes.  A single
softmax over the whole bank therefore lets the low-pass terms swamp the
band-pass ones even when the band-pass scores are c times larger.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, GraphError
from .filters import Aggregation, Comparison, FilterBank, raw_responses
from .graph import Graph

SCALES = (1, 2, 4, 8, 16, 32)


def scaled_bank(K: int, aggregations: Sequence[int] = (1, 2, 3), comparisons=((1, 2), (2, 4), (4, 8))) -> FilterBank:
    """The default bank with every diffusion power multiplied by K (so all scales are >= K)."""
    if K < 1:
        raise ConfigError(f"scale K must be >= 1, got {K}")
    return FilterBank(
        tuple(Aggregation(K * k) for k in aggregations),
        tuple(Comparison(K * a, K * b) for a, b in comparisons),
    )


@dataclass(frozen=True)
class BandDominantSetup:
    bank: FilterBank
    c: float
    scores: np.ndarray  # one weight per filter, in bank.filters order, summing to 1

    @property
    def agg_scores(self) -> np.ndarray:
        return self.scores[: len(self.bank.aggregations)]

    @property
    def cmp_scores(self) -> np.ndarray:
        return self.scores[len(self.bank.aggregations):]


def band_dominant_scores(n_agg: int, n_cmp: int, c: float) -> np.ndarray:
    """Uniform scores t inside the aggregation group and c*t inside the comparison
    group, normalised to a single simplex: t = 1 / (n_agg + c n_cmp)."""
    if n_agg < 1 or n_cmp < 1:
        raise ConfigError("band dominance needs at least one filter of each kind")
    if not np.isfinite(c) or c <= 1.0:
        raise ConfigError(f"band-dominance factor must be finite and > 1, got {c}")
    t = 1.0 / (n_agg + c * n_cmp)
    return np.concatenate([np.full(n_agg, t), np.full(n_cmp, c * t)])


def construct_band_dominant(g: Graph, v: int, c: float, K: int, bank: FilterBank | None = None) -> BandDominantSetup:
    """Non-decoupled bank with all scales >= K and c-band-dominant scores at v.

    The scores do not depend on v here (every node gets the same assignment);
    ``v`` is validated so callers get an error for an invalid node.
    """
    if not 0 <= v < g.n:
        raise GraphError(f"node {v} outside graph of {g.n} vertices")
    bank = bank or scaled_bank(K)
    if min(bank.powers()) < K:
        raise ConfigError(f"bank uses power {min(bank.powers())} below scale {K}")
    scores = band_dominant_scores(len(bank.aggregations), len(bank.comparisons), c)
    setup = BandDominantSetup(bank, float(c), scores)
    gap = abs(setup.cmp_scores.max() - c * setup.agg_scores.max())
    if gap > 1e-12:
        raise AssertionError(f"band-dominance equality off by {gap}")
    return setup


def stationary_value(g: Graph, x) -> np.ndarray:
    """Limit of P^k x: ||x||_1 d / ||d||_1 (for x >= 0 on a connected graph)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    d = g.degrees.astype(np.float64)
    return np.abs(x).sum() * d / d.sum()


def stationary_distance(g: Graph, x, K: int) -> float:
    """max-norm distance between P^K x and the stationary limit."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return float(np.max(np.abs(g.diffusion.apply(x, K) - stationary_value(g, x))))


@dataclass(frozen=True)
class DominanceReport:
    graph: str
    node: int
    K: int
    c: float
    p_inf: float
    delta: float  # largest band-pass response magnitude at the node
    lhs: float  # sum over comparisons of score * response
    rhs: float  # sum over aggregations of score * response
    ratio: float  # |lhs| / (c * rhs)

    def __post_init__(self):
        if self.c <= 1:
            raise ContractError("c must exceed 1")


def _check_signal(g: Graph, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape != (g.n,):
        raise ContractError(f"signal of length {x.size} for a graph of {g.n} vertices")
    if np.any(x < 0) or not np.any(x > 0):
        raise ContractError("signal must be non-negative and not identically zero")
    if not g.is_connected():
        raise GraphError("dominance checks need a connected graph")
    return x


def dominance_ratio(g: Graph, v: int, x, c: float, K: int, graph_id: str = "") -> DominanceReport:
    return dominance_reports(g, x, c, K, [v], graph_id)[0]


def dominance_reports(g: Graph, x, c: float, K: int, nodes: Iterable[int] | None = None, graph_id: str = "") -> list[DominanceReport]:
    """Reports for several nodes of one graph sharing a single diffusion pass."""
    x = _check_signal(g, x)
    nodes = range(g.n) if nodes is None else list(nodes)
    setup = construct_band_dominant(g, 0, c, K)
    h = raw_responses(setup.bank, x[:, None], g.diffusion)[:, :, 0]  # (filters, n)
    nA = len(setup.bank.aggregations)
    agg, band = h[:nA], h[nA:]
    p_inf = stationary_value(g, x)
    out = []
    for v in nodes:
        lhs = float(setup.cmp_scores @ band[:, v])
        rhs = float(setup.agg_scores @ agg[:, v])
        out.append(DominanceReport(
            graph_id, int(v), int(K), float(c), float(p_inf[v]), float(np.abs(band[:, v]).max()),
            lhs, rhs, abs(lhs) / (c * rhs),
        ))
    return out


def contribution_ratios(g: Graph, x, c: float, K: int) -> dict[str, float]:
    """Norm of the band-pass part of the layer output relative to the low-pass part.

    non-decoupled: identity m and the c-band-dominant single-softmax scores.
    decoupled: separate uniform softmax per group and a learned m modelled as a
    per-filter gain that brings every response to unit RMS (a linear map the
    learned transform can represent); the aggregation group cannot drown the
    comparison group because their weights are normalised independently.
    """
    x = _check_signal(g, x)
    setup = construct_band_dominant(g, 0, c, K)
    h = raw_responses(setup.bank, x[:, None], g.diffusion)[:, :, 0]
    nA = len(setup.bank.aggregations)
    agg, band = h[:nA], h[nA:]
    nd_band = setup.cmp_scores @ band
    nd_agg = setup.agg_scores @ agg
    rms = np.sqrt(np.mean(h * h, axis=1, keepdims=True))
    unit = np.divide(h, rms, out=np.zeros_like(h), where=rms > 0)
    d_agg = unit[:nA].mean(axis=0)
    d_band = unit[nA:].mean(axis=0)
    return {
        "non-decoupled": float(np.linalg.norm(nd_band) / np.linalg.norm(nd_agg)),
        "decoupled": float(np.linalg.norm(d_band) / np.linalg.norm(d_agg)),
    }


def write_reports(path: str | Path, reports: Sequence[DominanceReport]) -> None:
    names = [f.name for f in dataclasses.fields(DominanceReport)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in reports:
            w.writerow(dataclasses.asdict(r))


def trend(g: Graph, x, c: float, scales: Sequence[int] = SCALES, graph_id: str = "") -> list[DominanceReport]:
    """Reports for every node at every scale."""
    out = []
    for K in scales:
        out.extend(dominance_reports(g, x, c, K, graph_id=graph_id))
    return out

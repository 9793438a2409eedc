"""Rule-based decoders turning node probabilities into valid discrete solutions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class Solution:
    problem: str
    vertices: tuple[int, ...]
    objective: int
    valid: bool
    other: tuple[int, ...] = ()  # T side of a cut
    info: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        return json.dumps({"problem": self.problem, "vertices": list(self.vertices), "objective": self.objective})


# ---------------------------------------------------------------------------
# validity checks shared by decoders, baselines and tests


def cut_size(g: Graph, side: np.ndarray) -> int:
    side = np.asarray(side, dtype=bool)
    e = g.edges
    return int(np.count_nonzero(side[e[:, 0]] != side[e[:, 1]])) if len(e) else 0


def is_clique(g: Graph, vertices) -> bool:
    vs = list(vertices)
    if not vs or len(set(vs)) != len(vs):
        return False
    nb = g.neighbor_sets
    return all(vs[j] in nb[vs[i]] for i in range(len(vs)) for j in range(i + 1, len(vs)))


def is_dominating(g: Graph, vertices) -> bool:
    covered = np.zeros(g.n, dtype=bool)
    for v in vertices:
        covered[v] = True
        covered[g.neighbors(v)] = True
    return bool(covered.all())


def make_cut(g: Graph, side: np.ndarray, **info) -> Solution:
    side = np.asarray(side, dtype=bool)
    S = tuple(np.flatnonzero(side).tolist())
    T = tuple(np.flatnonzero(~side).tolist())
    return Solution("mcut", S, cut_size(g, side), True, T, info)


def make_clique(g: Graph, vertices, **info) -> Solution:
    vs = tuple(sorted(int(v) for v in vertices))
    return Solution("mclique", vs, len(vs), is_clique(g, vs), (), info)


def make_dominating(g: Graph, vertices, **info) -> Solution:
    vs = tuple(sorted(int(v) for v in vertices))
    return Solution("mds", vs, len(vs), is_dominating(g, vs), (), info)


def check(g: Graph, sol: Solution) -> bool:
    """Re-verify a solution from scratch."""
    if sol.problem == "mcut":
        part = sorted(sol.vertices + sol.other)
        side = np.zeros(g.n, dtype=bool)
        side[list(sol.vertices)] = True
        return part == list(range(g.n)) and cut_size(g, side) == sol.objective
    if sol.problem == "mclique":
        return is_clique(g, sol.vertices) and sol.objective == len(sol.vertices)
    if sol.problem == "mds":
        return is_dominating(g, sol.vertices) and sol.objective == len(sol.vertices)
    raise ValueError(f"unknown problem {sol.problem!r}")


def probability_order(p) -> np.ndarray:
    """Vertices by descending probability; ties keep ascending index."""
    p = np.asarray(p, dtype=np.float64).ravel()
    return np.argsort(-p, kind="stable")


# ---------------------------------------------------------------------------
# decoders


def decode_mcut(p, g: Graph) -> Solution:
    """S = {v : 2 p_v - 1 >= 0}."""
    p = np.asarray(p, dtype=np.float64).ravel()
    return make_cut(g, 2.0 * p - 1.0 >= 0.0)


def _greedy_clique(g: Graph, order: np.ndarray, start: int) -> list[int]:
    masks = g.neighbor_masks
    seed = int(order[start])
    clique = [seed]
    common = masks[seed]
    for v in order[start + 1:].tolist():
        if common >> v & 1:
            clique.append(v)
            common &= masks[v]
    return clique


def decode_mclique(p, g: Graph, K: int = 1) -> Solution:
    """Best of K greedy cliques; restart k is seeded with the k-th most likely
    vertex and only considers vertices after it in the order."""
    if K < 1:
        raise ValueError("K must be >= 1")
    order = probability_order(p)
    K = min(K, g.n)
    best: list[int] | None = None
    best_k = 0
    for k in range(K):
        c = _greedy_clique(g, order, k)
        if best is None or len(c) > len(best):
            best, best_k = c, k
    return make_clique(g, best, restart=best_k)


def _greedy_dominating(g: Graph, order: np.ndarray, start: int) -> list[int] | None:
    n = g.n
    covered = np.zeros(n, dtype=bool)
    remaining = n
    chosen = []
    for v in order[start:].tolist():
        chosen.append(v)
        nb = g.neighbors(v)
        newly = ~covered[nb]
        remaining -= int(np.count_nonzero(newly))
        covered[nb] = True
        if not covered[v]:
            covered[v] = True
            remaining -= 1
        if remaining == 0:
            return chosen
    return None


def decode_mds(p, g: Graph, K: int = 1) -> Solution:
    """Smallest of K greedy dominating sets built along the probability order.
    Restarts that cannot dominate without excluded vertices are skipped."""
    if K < 1:
        raise ValueError("K must be >= 1")
    order = probability_order(p)
    K = min(K, g.n)
    best: list[int] | None = None
    best_k = 0
    for k in range(K):
        s = _greedy_dominating(g, order, k)
        if s is not None and (best is None or len(s) < len(best)):
            best, best_k = s, k
    if best is None:  # only possible for an empty graph
        best = []
    return make_dominating(g, best, restart=best_k)


def decode(problem: str, p, g: Graph, K: int = 1) -> Solution:
    if problem == "mcut":
        return decode_mcut(p, g)
    if problem == "mclique":
        return decode_mclique(p, g, K)
    if problem == "mds":
        return decode_mds(p, g, K)
    raise ValueError(f"unknown problem {problem!r}")

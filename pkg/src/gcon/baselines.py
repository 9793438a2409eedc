"""Non-learned competitors: greedy heuristics, mean-field annealing and exact
solvers for small instances."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .decoders import Solution, cut_size, decode, make_clique, make_cut, make_dominating
from .errors import BudgetError, TrainingError
from .graph import Graph
from .losses import resolve_beta

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# greedy heuristics


def greedy_mcut(
    g: Graph, seed: int = 0, fixed_point: bool = True, max_passes: int = 1000, initial=None
) -> Solution:
    """Random partition, then passes over the vertices moving v across whenever it
    has strictly more neighbours on its own side.  ``fixed_point=False`` stops
    after one pass; ``initial`` (boolean side of S) replaces the random start."""
    if initial is None:
        side = np.random.default_rng(seed).integers(0, 2, size=g.n).astype(bool)
    else:
        side = np.array(initial, dtype=bool)
    initial = cut_size(g, side)
    passes = 0
    while True:
        passes += 1
        moved = False
        for v in range(g.n):
            nb = g.neighbors(v)
            same = int(np.count_nonzero(side[nb] == side[v]))
            if same > len(nb) - same:
                side[v] = not side[v]
                moved = True
        if not fixed_point or not moved or passes >= max_passes:
            break
    return make_cut(g, side, initial_cut=initial, passes=passes)


def degree_order(g: Graph) -> np.ndarray:
    return np.argsort(-g.degrees, kind="stable")


def greedy_mclique(g: Graph) -> Solution:
    """Scan vertices by descending degree, keeping each one adjacent to the whole
    current clique."""
    masks = g.neighbor_masks
    clique: list[int] = []
    common = -1  # all bits set
    for v in degree_order(g).tolist():
        if common >> v & 1 if clique else True:
            clique.append(v)
            common = masks[v] if len(clique) == 1 else common & masks[v]
    return make_clique(g, clique)


def greedy_mds(g: Graph, threshold: float = 1.0, weight: float = 10.0, old_factor: bool = False) -> Solution:
    """Potential-based greedy over vertices by descending degree.

    Every vertex starts with inclusion probability 1/2 and u holds the
    probability that a vertex stays uncovered.  A vertex joins when
    weight / (1 - p_i) * (u_i + sum of neighbour u) exceeds ``threshold``.
    Otherwise p_i drops to 0 and u_i and its neighbours' u are divided by
    (1 - p_i).  Taken literally that factor is the new one, 1, so the update
    is a no-op; ``old_factor=True`` divides by the old 1/2 instead.  Vertices
    still undominated at the end are appended so the output always dominates.
    """
    n = g.n
    p = np.full(n, 0.5)
    u = 0.5 ** (g.degrees + 1).astype(np.float64)
    chosen = []
    for i in degree_order(g).tolist():
        nb = g.neighbors(i)
        assert p[i] < 1.0
        potential = weight / (1.0 - p[i]) * (u[i] + u[nb].sum())
        if potential > threshold:
            chosen.append(i)
            p[i] = 1.0
            u[i] = 0.0
            u[nb] = 0.0
        else:
            factor = 1.0 - p[i] if old_factor else 1.0
            p[i] = 0.0
            u[i] /= factor
            u[nb] /= factor
    covered = np.zeros(n, dtype=bool)
    for v in chosen:
        covered[v] = True
        covered[g.neighbors(v)] = True
    repaired = np.flatnonzero(~covered).tolist()
    if repaired:
        log.debug("greedy_mds appended %d undominated vertices", len(repaired))
    return make_dominating(g, chosen + repaired, repaired=len(repaired))


# ---------------------------------------------------------------------------
# mean-field annealing


@dataclass(frozen=True)
class MFASchedule:
    t0: float = 2.0
    decay: float = 0.95
    t_min: float = 0.01
    sweeps: int = 300
    tol: float = 1e-7

    def __post_init__(self):
        if not (self.t0 > self.t_min > 0):
            raise ValueError("need t0 > t_min > 0")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


class _MeanField:
    """Keeps the local fields needed for dL/dp_i up to date under single-site updates."""

    def __init__(self, g: Graph, problem: str, p: np.ndarray, beta: float, eps: float = 1e-7):
        self.g = g
        self.problem = problem
        self.beta = beta
        self.eps = eps
        self.nbrs = [g.neighbors(v) for v in range(g.n)]
        self.p = p.copy()
        A = g.adjacency
        if problem == "mcut":
            self.field = A @ (2 * self.p - 1)
        elif problem == "mclique":
            self.field = A @ self.p
            self.total = float(self.p.sum())
        elif problem == "mds":
            lm = np.log1p(-np.clip(self.p, eps, 1 - eps))
            self.lm = lm
            self.field = lm + A @ lm
        else:
            raise ValueError(f"unknown problem {problem!r}")

    def grad(self, i: int) -> float:
        p = self.p
        if self.problem == "mcut":
            return 2.0 * self.field[i]
        if self.problem == "mclique":
            ap = self.field[i]
            return -2.0 * ap + 2.0 * self.beta * (self.total - p[i] - ap)
        nb = self.nbrs[i]
        closed = np.append(nb, i)
        rest = np.exp(self.field[closed] - self.lm[i])
        return 1.0 - self.beta * float(rest.sum())

    def set(self, i: int, value: float) -> None:
        old = self.p[i]
        self.p[i] = value
        nb = self.nbrs[i]
        if self.problem == "mcut":
            self.field[nb] += 2.0 * (value - old)
        elif self.problem == "mclique":
            self.field[nb] += value - old
            self.total += value - old
        else:
            new_lm = math.log1p(-min(max(value, self.eps), 1 - self.eps))
            delta = new_lm - self.lm[i]
            self.lm[i] = new_lm
            self.field[nb] += delta
            self.field[i] += delta

    def gradient(self) -> np.ndarray:
        return np.array([self.grad(i) for i in range(self.g.n)])


def mfa_probabilities(
    g: Graph,
    problem: str,
    schedule: MFASchedule | None = None,
    seed: int = 0,
    beta: float | None = None,
    synchronous: bool = False,
) -> np.ndarray:
    """Anneal p_i <- sigmoid(-dL/dp_i / T) under geometric cooling.

    Default updates are sequential sweeps in a fresh random order each sweep;
    ``synchronous=True`` updates all sites at once from the loss gradient.
    ``beta=None`` picks the same default as training (calibrated for MDS).
    """
    schedule = schedule or MFASchedule()
    beta = resolve_beta(problem, beta, [g])
    rng = np.random.default_rng(seed)
    p = 0.5 + rng.uniform(-0.01, 0.01, size=g.n)
    if synchronous:
        from . import autodiff as ad
        from .losses import problem_loss

        T = schedule.t0
        for _ in range(schedule.sweeps):
            t = ad.Tensor(p, requires_grad=True)
            with ad.Tape() as tape:
                loss = problem_loss(problem, t, g, beta)
            grad = tape.gradients(loss, [t])[0].ravel()
            if not np.all(np.isfinite(grad)):
                raise TrainingError("non-finite mean-field gradient")
            new = 1.0 / (1.0 + np.exp(np.clip(grad / T, -500, 500)))
            done = np.max(np.abs(new - p)) < schedule.tol and T <= schedule.t_min
            p = new
            T = max(T * schedule.decay, schedule.t_min)
            if done:
                break
        return p
    mf = _MeanField(g, problem, p, beta)
    T = schedule.t0
    for _ in range(schedule.sweeps):
        change = 0.0
        for i in rng.permutation(g.n).tolist():
            gi = mf.grad(i)
            if not math.isfinite(gi):
                raise TrainingError("non-finite mean-field gradient")
            new = _sigmoid(-gi / T)
            change = max(change, abs(new - mf.p[i]))
            mf.set(i, new)
        if change < schedule.tol and T <= schedule.t_min:
            break
        T = max(T * schedule.decay, schedule.t_min)
    return mf.p


def mfa(
    g: Graph,
    problem: str,
    schedule: MFASchedule | None = None,
    seed: int = 0,
    beta: float | None = None,
    K: int | None = None,
    synchronous: bool = False,
) -> Solution:
    p = mfa_probabilities(g, problem, schedule, seed, beta, synchronous)
    if K is None:
        K = {"mcut": 1, "mclique": 10, "mds": 1}[problem]
    return decode(problem, p, g, K)


# ---------------------------------------------------------------------------
# exact solvers

ORACLE_BUDGET = {"mcut": 20, "mclique": 40, "mds": 20}


def _check_budget(g: Graph, problem: str, budget: dict | None) -> None:
    limit = (budget or ORACLE_BUDGET)[problem]
    if g.n > limit:
        raise BudgetError(f"exact {problem} solver is limited to {limit} vertices, graph has {g.n}")


def exact_mcut(g: Graph) -> Solution:
    n = g.n
    if n <= 1 or g.num_edges == 0:
        return make_cut(g, np.ones(n, dtype=bool))
    codes = np.arange(1 << (n - 1), dtype=np.int64)
    best_val, best_code = -1, 0
    chunk = 1 << 16
    e = g.edges
    for start in range(0, len(codes), chunk):
        c = codes[start:start + chunk]
        cut = np.zeros(len(c), dtype=np.int64)
        for u, v in e.tolist():
            cut += ((c >> u) ^ (c >> v)) & 1
        j = int(np.argmax(cut))
        if cut[j] > best_val:
            best_val, best_code = int(cut[j]), int(c[j])
    side = np.array([(best_code >> v) & 1 == 0 for v in range(n)])
    return make_cut(g, side)


def exact_mclique(g: Graph) -> Solution:
    """Branch and bound over bitsets with a greedy colouring bound."""
    masks = g.neighbor_masks
    n = g.n
    if n == 0:
        return make_clique(g, [])
    best: list[int] = list(greedy_mclique(g).vertices)

    def color_bound(cand: int) -> list[tuple[int, int]]:
        # greedy colouring; returns (vertex, colour) in nondecreasing colour order
        out = []
        color = 0
        uncolored = cand
        while uncolored:
            color += 1
            avail = uncolored
            while avail:
                v = (avail & -avail).bit_length() - 1
                avail &= ~(1 << v)
                avail &= ~masks[v]
                uncolored &= ~(1 << v)
                out.append((v, color))
        return out

    def expand(clique: list[int], cand: int) -> None:
        nonlocal best
        for v, col in reversed(color_bound(cand)):
            if len(clique) + col <= len(best):
                return
            clique.append(v)
            new = cand & masks[v]
            if new:
                expand(clique, new)
            elif len(clique) > len(best):
                best = list(clique)
            clique.pop()
            cand &= ~(1 << v)

    expand([], (1 << n) - 1)
    return make_clique(g, best)


def exact_mds(g: Graph) -> Solution:
    """Iterative deepening on the set size; branches on the closed neighbourhood
    of the lowest undominated vertex, pruning by a coverage bound."""
    n = g.n
    if n == 0:
        return make_dominating(g, [])
    closed = [g.neighbor_masks[v] | (1 << v) for v in range(n)]
    full = (1 << n) - 1
    max_cover = max(c.bit_count() for c in closed)

    def search(chosen: list[int], covered: int, k: int) -> list[int] | None:
        if covered == full:
            return list(chosen)
        left = k - len(chosen)
        if left == 0:
            return None
        missing = n - covered.bit_count()
        if left * max_cover < missing:
            return None
        undominated = full & ~covered
        u = (undominated & -undominated).bit_length() - 1
        opts = closed[u]
        while opts:
            v = (opts & -opts).bit_length() - 1
            opts &= opts - 1
            chosen.append(v)
            res = search(chosen, covered | closed[v], k)
            chosen.pop()
            if res is not None:
                return res
        return None

    for k in range(1, n + 1):
        res = search([], 0, k)
        if res is not None:
            return make_dominating(g, res)
    raise AssertionError("unreachable: V itself dominates")


def exact_solve(g: Graph, problem: str, budget: dict | None = None) -> Solution:
    _check_budget(g, problem, budget)
    if problem == "mcut":
        return exact_mcut(g)
    if problem == "mclique":
        return exact_mclique(g)
    if problem == "mds":
        return exact_mds(g)
    raise ValueError(f"unknown problem {problem!r}")


def greedy(g: Graph, problem: str, seed: int = 0) -> Solution:
    if problem == "mcut":
        return greedy_mcut(g, seed)
    if problem == "mclique":
        return greedy_mclique(g)
    if problem == "mds":
        return greedy_mds(g)
    raise ValueError(f"unknown problem {problem!r}")

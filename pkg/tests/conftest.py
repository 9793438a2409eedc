import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from gcon.graph import Graph

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def k(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def path(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def star(leaves: int) -> Graph:
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def random_graph(rng: np.random.Generator, n: int, p: float, connected: bool = False) -> Graph:
    """Erdos-Renyi draw; with ``connected`` a random spanning tree is added first."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    edges = set(zip(iu[keep].tolist(), ju[keep].tolist()))
    if connected:
        order = rng.permutation(n)
        for i in range(1, n):
            u, v = int(order[i]), int(order[rng.integers(i)])
            edges.add((min(u, v), max(u, v)))
    return Graph(n, sorted(edges))


@st.composite
def graphs(draw, min_n=1, max_n=12, connected=False):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    if connected:
        parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
        chosen = set(chosen) | {(p, i) for i, p in zip(range(1, n), parents)}
    return Graph(n, sorted(chosen))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def numeric_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of the scalar function f at x (x is perturbed in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the largest numeric entry (floored to avoid 0/0)."""
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8))


def brute_force(g: Graph, problem: str) -> int:
    """Optimum by plain enumeration of vertex subsets (independent of the package's solvers)."""
    n = g.n
    edges = [tuple(e) for e in g.edges.tolist()]
    nbr = [set() for _ in range(n)]
    for i, j in edges:
        nbr[i].add(j)
        nbr[j].add(i)
    best = None
    for mask in range(1 << n):
        s = {v for v in range(n) if mask >> v & 1}
        if problem == "mcut":
            val = sum((i in s) != (j in s) for i, j in edges)
            best = val if best is None else max(best, val)
        elif problem == "mclique":
            if s and all(v in nbr[u] for u in s for v in s if u < v):
                best = len(s) if best is None else max(best, len(s))
        elif all(v in s or nbr[v] & s for v in range(n)):
            best = len(s) if best is None else min(best, len(s))
    return best

"""Graph representation, lazy random-walk diffusion, generators and node features."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import GraphError, ShapeError


class Graph:
    """Immutable simple undirected graph stored as a symmetric CSR adjacency."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] | np.ndarray = ()):
        if n < 0:
            raise GraphError(f"vertex count must be nonnegative, got {n}")
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        e = e.reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loops are not allowed")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(e) else e
        self.n = int(n)
        self._edges = pairs
        self._edges.setflags(write=False)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        adj.sort_indices()
        for arr in (adj.data, adj.indices, adj.indptr):
            arr.setflags(write=False)
        self._adj = adj
        self.degrees = np.diff(adj.indptr).astype(np.int64)
        self.degrees.setflags(write=False)

    @property
    def adjacency(self) -> sp.csr_matrix:
        return self._adj

    @property
    def indptr(self) -> np.ndarray:
        return self._adj.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._adj.indices

    @property
    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, lexicographically sorted."""
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self._adj.indices[self._adj.indptr[v]:self._adj.indptr[v + 1]]

    @cached_property
    def neighbor_sets(self) -> list[frozenset[int]]:
        return [frozenset(self.neighbors(v).tolist()) for v in range(self.n)]

    @cached_property
    def neighbor_masks(self) -> list[int]:
        """Open neighborhoods as python-int bitsets."""
        masks = []
        for v in range(self.n):
            m = 0
            for u in self.neighbors(v).tolist():
                m |= 1 << u
            masks.append(m)
        return masks

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        k, _ = connected_components(self._adj, directed=False)
        return k == 1

    @cached_property
    def diffusion(self) -> "DiffusionOperator":
        return DiffusionOperator(self)

    def complement(self) -> "Graph":
        dense = np.ones((self.n, self.n), dtype=bool)
        np.fill_diagonal(dense, False)
        dense[self._edges[:, 0], self._edges[:, 1]] = False
        iu = np.argwhere(np.triu(dense, 1))
        return Graph(self.n, iu)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with vertex i renamed to perm[i]."""
        perm = np.asarray(perm)
        return Graph(self.n, perm[self._edges] if len(self._edges) else self._edges)

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self._edges.tolist())
        return g

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and np.array_equal(self._edges, other._edges)

    def __hash__(self):
        return hash((self.n, self._edges.tobytes()))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges})"


def lazy_walk_matrix(adj: sp.spmatrix) -> sp.csr_matrix:
    """P = 1/2 (I + A D^-1).  Isolated vertices keep all their mass (P[i, i] = 1)."""
    n = adj.shape[0]
    deg = np.asarray(adj.sum(axis=0)).ravel()
    inv = np.zeros(n)
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    diag = np.where(nz, 0.5, 1.0)
    P = 0.5 * (adj @ sp.diags(inv)) + sp.diags(diag)
    return sp.csr_matrix(P)


class DiffusionOperator:
    """Column-stochastic lazy random walk P applied as a sparse linear map.

    Powers are never materialized; ``apply`` multiplies k times.
    """

    def __init__(self, graph: Graph):
        self.graph = graph
        self.matrix = lazy_walk_matrix(graph.adjacency)

    @property
    def n(self) -> int:
        return self.graph.n

    def apply(self, x, k: int = 1) -> np.ndarray:
        return apply_diffusion(self, x, k)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if not np.all(np.isfinite(self.values)):
            raise GraphError("feature matrix contains non-finite entries")

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _as_array(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.values
    return np.asarray(x, dtype=np.float64)


def apply_diffusion(op: DiffusionOperator, x, k: int) -> np.ndarray:
    """P^k x by k successive sparse products; output has the shape of x."""
    if k < 1:
        raise GraphError(f"diffusion power must be >= 1, got {k}")
    out = _as_array(x)
    if out.shape[0] != op.n:
        raise ShapeError(f"expected {op.n} rows, got {out.shape[0]}")
    for _ in range(k):
        out = op.matrix @ out
    return out


def complement_adjacency_apply(g: Graph, x) -> np.ndarray:
    """Complement adjacency product via (J - I - A) x, never forming the complement."""
    x = _as_array(x)
    if x.shape[0] != g.n:
        raise ShapeError(f"expected {g.n} rows, got {x.shape[0]}")
    return x.sum(axis=0, keepdims=True) - x - g.adjacency @ x if x.ndim == 2 else x.sum() - x - g.adjacency @ x


# ---------------------------------------------------------------------------
# generators


def generate_ba(n: int, m: int, seed: int) -> Graph:
    """Preferential attachment: vertex m joins the m seed vertices, then every new
    vertex picks m distinct targets with probability proportional to degree.
    Produces exactly m * (n - m) edges and is always connected."""
    if not 1 <= m < n:
        raise GraphError(f"need 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = []
    repeated: list[int] = []
    targets = list(range(m))
    for source in range(m, n):
        edges.extend((t, source) for t in targets)
        repeated.extend(targets)
        repeated.extend([source] * m)
        chosen: set[int] = set()
        while len(chosen) < m and source + 1 < n:
            chosen.add(repeated[int(rng.integers(len(repeated)))])
        targets = sorted(chosen)
    return Graph(n, edges)


@dataclass(frozen=True)
class RBParams:
    """Model RB with a planted solution.

    ``num_blocks`` disjoint cliques of ``block_size`` vertices each form the
    conflict graph; random forbidden pairs between blocks are added at
    tightness ``p``.  ``r`` controls the number of sampled block pairs and
    defaults to the critical value -alpha / ln(1 - p), alpha = ln k / ln n.
    """

    num_blocks: int
    block_size: int
    p: float
    r: float | None = None

    def validate(self) -> None:
        if self.num_blocks < 1 or self.block_size < 1:
            raise GraphError("RB needs at least one block of at least one vertex")
        if not 0.0 <= self.p < 1.0:
            raise GraphError(f"RB tightness must lie in [0, 1), got {self.p}")
        if self.r is not None and self.r < 0:
            raise GraphError("RB r must be nonnegative")


def _rb_attempt(params: RBParams, rng: np.random.Generator) -> Graph:
    nb, k, p = params.num_blocks, params.block_size, params.p
    n = nb * k
    planted = rng.integers(k, size=nb)
    forbidden = set()
    s = int(p * k * k)
    if nb >= 2 and s > 0:
        if params.r is not None:
            r = params.r
        else:
            alpha = np.log(k) / np.log(nb) if nb > 1 else 0.0
            r = -alpha / np.log(1.0 - p)
        iterations = max(int(r * nb * np.log(nb) - 1), 0)
        for _ in range(iterations):
            i, j = rng.choice(nb, 2, replace=False)
            cand = [
                (i * k + a, j * k + b)
                for a in range(k)
                for b in range(k)
                if not (a == planted[i] and b == planted[j])
            ]
            cand = [c for c in cand if (min(c), max(c)) not in forbidden]
            if not cand:
                continue
            take = rng.choice(len(cand), size=min(s, len(cand)), replace=False)
            for t in sorted(take.tolist()):
                u, v = cand[t]
                forbidden.add((min(u, v), max(u, v)))
    block = np.arange(n) // k
    iu, ju = np.triu_indices(n, 1)
    keep = block[iu] != block[ju]
    pairs = [(int(u), int(v)) for u, v in zip(iu[keep], ju[keep]) if (u, v) not in forbidden]
    return Graph(n, pairs)


def generate_rb(params: RBParams, seed: int, max_attempts: int = 100) -> Graph:
    """Complement of an RB conflict graph: contains a planted clique with one
    vertex per block.  Disconnected draws are redrawn with a sub-seed."""
    params.validate()
    for attempt in range(max_attempts):
        g = _rb_attempt(params, np.random.default_rng([seed, attempt]))
        if g.is_connected():
            return g
    raise GraphError(f"no connected RB instance after {max_attempts} attempts")


# ---------------------------------------------------------------------------
# features

FEATURES = ("degree", "eccentricity", "clustering", "triangles")


def triangle_counts(g: Graph) -> np.ndarray:
    A = g.adjacency
    return np.asarray((A @ A).multiply(A).sum(axis=1)).ravel() / 2.0


def eccentricities(g: Graph) -> np.ndarray:
    if g.n == 0:
        return np.zeros(0)
    dist = shortest_path(g.adjacency, directed=False, unweighted=True)
    dist[~np.isfinite(dist)] = 0.0
    return dist.max(axis=1)


def clustering_coefficients(g: Graph) -> np.ndarray:
    tri = triangle_counts(g)
    d = g.degrees.astype(np.float64)
    out = np.zeros(g.n)
    ok = d >= 2
    out[ok] = 2.0 * tri[ok] / (d[ok] * (d[ok] - 1.0))
    return out


def extract_features(g: Graph, names: Sequence[str] = FEATURES) -> FeatureMatrix:
    cols = []
    for name in names:
        if name == "degree":
            cols.append(g.degrees.astype(np.float64))
        elif name == "eccentricity":
            cols.append(eccentricities(g))
        elif name == "clustering":
            cols.append(clustering_coefficients(g))
        elif name == "triangles":
            cols.append(triangle_counts(g))
        else:
            raise GraphError(f"unknown feature {name!r}; choose from {FEATURES}")
    vals = np.stack(cols, axis=1) if cols else np.zeros((g.n, 0))
    return FeatureMatrix(vals, tuple(names))


# ---------------------------------------------------------------------------
# batching


@dataclass
class GraphBatch:
    """Disjoint union of graphs as one block-diagonal system.

    ``segments`` is the (num_graphs x N) 0/1 membership matrix; multiplying by
    it gives per-graph sums, its transpose broadcasts per-graph values back.
    """

    graphs: list[Graph]
    P: sp.csr_matrix
    A: sp.csr_matrix
    A_closed: sp.csr_matrix
    segments: sp.csr_matrix
    offsets: np.ndarray
    graph_of_node: np.ndarray
    sizes: np.ndarray = field(repr=False)

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> "GraphBatch":
        graphs = list(graphs)
        if not graphs:
            raise GraphError("empty batch")
        sizes = np.array([g.n for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        N = int(offsets[-1])
        P = sp.block_diag([g.diffusion.matrix for g in graphs], format="csr")
        A = sp.block_diag([g.adjacency for g in graphs], format="csr")
        gid = np.repeat(np.arange(len(graphs)), sizes)
        seg = sp.csr_matrix((np.ones(N), (gid, np.arange(N))), shape=(len(graphs), N))
        return cls(
            graphs=graphs,
            P=P,
            A=A,
            A_closed=sp.csr_matrix(A + sp.identity(N, format="csr")),
            segments=seg,
            offsets=offsets,
            graph_of_node=gid,
            sizes=sizes,
        )

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)

    @property
    def num_nodes(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def node_graph_size(self) -> np.ndarray:
        return self.sizes[self.graph_of_node].astype(np.float64)[:, None]

    def split(self, values: np.ndarray) -> list[np.ndarray]:
        return [values[self.offsets[i]:self.offsets[i + 1]] for i in range(self.num_graphs)]


# ---------------------------------------------------------------------------
# edge-list files and dataset directories


def write_edgelist(g: Graph, path: str | Path) -> None:
    lines = [f"{g.n} {g.num_edges}"]
    lines.extend(f"{u} {v}" for u, v in g.edges.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path: str | Path, require_connected: bool = True) -> Graph:
    text = Path(path).read_text().split("\n")
    header = text[0].split()
    if len(header) != 2:
        raise GraphError(f"{path}: header must be 'n m'")
    n, m = int(header[0]), int(header[1])
    rows = [ln.split() for ln in text[1:] if ln.strip()]
    if len(rows) != m:
        raise GraphError(f"{path}: header announces {m} edges, found {len(rows)}")
    edges = np.array([(int(a), int(b)) for a, b in rows], dtype=np.int64).reshape(-1, 2)
    if len(edges) and np.any(edges[:, 0] >= edges[:, 1]):
        raise GraphError(f"{path}: edges must be listed with u < v")
    g = Graph(n, edges)
    if g.num_edges != m:
        raise GraphError(f"{path}: duplicate edges")
    if require_connected and not g.is_connected():
        raise GraphError(f"{path}: graph is disconnected")
    return g


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

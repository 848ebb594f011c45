"""Undirected multigraphs and the expansion analysis kit.

Parallel edges are allowed, self-loops are not. Laplacians use edge
multiplicities: ``L[i, j] = -mult(i, j)`` off the diagonal and
``L[i, i] = degree(i)``.

Conductance convention
----------------------
``conductance_exact`` measures a vertex set ``S`` by ``e(S)``, the number of
edges with both endpoints in ``S`` plus the cut edges counted once (the edges
touching ``S``). A set is admissible when ``0 < e(S) <= |E| / 2``. If no
proper subset qualifies (a single edge, for instance) the bound relaxes to
``e(S) <= e(V \\ S)``. Disconnected graphs have conductance 0.
"""

from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator

import numpy as np

from . import kernels

MAX_EXACT_CUT_VERTICES = 22


class GraphError(ValueError):
    pass


class Graph:
    """Undirected multigraph without self-loops."""

    __slots__ = ("_adj", "_num_edges", "version")

    def __init__(self, vertices: Iterable[Hashable] = (), edges: Iterable[tuple] = ()):
        self._adj: dict[Hashable, Counter] = {}
        self._num_edges = 0
        self.version = 0
        for v in vertices:
            self.add_vertex(v)
        for u, v in edges:
            for w in (u, v):
                if w not in self._adj:
                    self.add_vertex(w)
            self.add_edge(u, v)

    # -- mutation -----------------------------------------------------------
    def add_vertex(self, v: Hashable) -> None:
        if v in self._adj:
            raise GraphError(f"vertex {v!r} already present")
        self._adj[v] = Counter()
        self.version += 1

    def remove_vertex(self, v: Hashable) -> int:
        """Delete ``v`` and its incident edges; returns how many edges went."""
        nbrs = self._adj.pop(v, None)
        if nbrs is None:
            raise GraphError(f"vertex {v!r} not present")
        removed = 0
        for u, m in nbrs.items():
            del self._adj[u][v]
            removed += m
        self._num_edges -= removed
        self.version += 1
        return removed

    def add_edge(self, u: Hashable, v: Hashable) -> None:
        if u == v:
            raise GraphError("self-loop forbidden")
        if u not in self._adj or v not in self._adj:
            raise GraphError(f"edge ({u!r}, {v!r}) has an endpoint outside the graph")
        self._adj[u][v] += 1
        self._adj[v][u] += 1
        self._num_edges += 1
        self.version += 1

    def remove_edge(self, u: Hashable, v: Hashable) -> None:
        if self._adj.get(u, {}).get(v, 0) == 0:
            raise GraphError(f"no edge ({u!r}, {v!r})")
        for a, b in ((u, v), (v, u)):
            self._adj[a][b] -= 1
            if self._adj[a][b] == 0:
                del self._adj[a][b]
        self._num_edges -= 1
        self.version += 1

    # -- queries ------------------------------------------------------------
    def __contains__(self, v) -> bool:
        return v in self._adj

    def __len__(self) -> int:
        return len(self._adj)

    def __repr__(self) -> str:
        return f"Graph(n={len(self._adj)}, m={self._num_edges})"

    @property
    def vertices(self) -> list:
        return list(self._adj)

    @property
    def num_vertices(self) -> int:
        return len(self._adj)

    @property
    def num_edges(self) -> int:
        return self._num_edges

    def multiplicity(self, u, v) -> int:
        return self._adj.get(u, {}).get(v, 0)

    def degree(self, v) -> int:
        return sum(self._adj[v].values())

    def neighbors(self, v) -> list:
        """Distinct neighbours of ``v`` in insertion order."""
        return list(self._adj[v])

    def neighbor_multiset(self, v) -> list:
        """Neighbours of ``v`` repeated by edge multiplicity."""
        out = []
        for u, m in self._adj[v].items():
            out.extend([u] * m)
        return out

    def edges(self) -> Iterator[tuple]:
        """Yield ``(u, v, multiplicity)`` once per unordered vertex pair."""
        seen = set()
        for u, nbrs in self._adj.items():
            for v, m in nbrs.items():
                if v not in seen:
                    yield u, v, m
            seen.add(u)

    def edge_list(self) -> list[tuple]:
        """Edges with parallel copies repeated."""
        return [(u, v) for u, v, m in self.edges() for _ in range(m)]

    def degrees(self) -> dict:
        return {v: sum(c.values()) for v, c in self._adj.items()}

    def max_degree(self) -> int:
        return max((sum(c.values()) for c in self._adj.values()), default=0)

    def copy(self) -> "Graph":
        g = Graph()
        g._adj = {v: Counter(c) for v, c in self._adj.items()}
        g._num_edges = self._num_edges
        g.version = self.version
        return g

    def components(self) -> list[set]:
        seen: set = set()
        comps = []
        for s in self._adj:
            if s in seen:
                continue
            comp = {s}
            stack = [s]
            while stack:
                x = stack.pop()
                for y in self._adj[x]:
                    if y not in comp:
                        comp.add(y)
                        stack.append(y)
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self) -> bool:
        if not self._adj:
            return False
        return len(self.components()) == 1

    def laplacian(self) -> tuple[np.ndarray, list]:
        order = self.vertices
        index = {v: i for i, v in enumerate(order)}
        n = len(order)
        L = np.zeros((n, n))
        for u, v, m in self.edges():
            i, j = index[u], index[v]
            L[i, j] -= m
            L[j, i] -= m
            L[i, i] += m
            L[j, j] += m
        return L, order

    def packed(self, spare: int = 0) -> "PackedAdjacency":
        return PackedAdjacency(self, spare)


class PackedAdjacency:
    """Padded neighbour table consumed by the walk kernels.

    Row ``i`` lists the neighbours of ``vertices[i]`` (as row indices),
    repeated by multiplicity, in its first ``deg[i]`` slots.
    """

    def __init__(self, g: Graph, spare: int = 0):
        self.vertices = g.vertices
        self.index = {v: i for i, v in enumerate(self.vertices)}
        n = len(self.vertices)
        cap = max(g.max_degree() + spare, 1)
        self.nbr = np.zeros((max(n, 1), cap), np.int64)
        self.deg = np.zeros(max(n, 1), np.int64)
        for v, i in self.index.items():
            row = [self.index[u] for u in g.neighbor_multiset(v)]
            self.deg[i] = len(row)
            self.nbr[i, : len(row)] = row
        self.source_version = g.version

    def link(self, i: int, j: int) -> None:
        for a, b in ((i, j), (j, i)):
            if self.deg[a] == self.nbr.shape[1]:
                grown = np.zeros((self.nbr.shape[0], 2 * self.nbr.shape[1]), np.int64)
                grown[:, : self.nbr.shape[1]] = self.nbr
                self.nbr = grown
            self.nbr[a, self.deg[a]] = b
            self.deg[a] += 1


# -- spectral and combinatorial analysis ----------------------------------------


@dataclass(frozen=True)
class SpectralSummary:
    lambda2: float
    max_degree: int
    num_vertices: int
    num_edges: int


@dataclass(frozen=True)
class LowerBound:
    """``I(G)^2 / (2 * max_degree)``; ``certified`` is False for sampled cuts."""

    value: float
    isoperimetric: float
    max_degree: int
    certified: bool

    def __float__(self) -> float:
        return self.value


def laplacian_lambda2(g: Graph) -> float:
    """Second-smallest Laplacian eigenvalue (dense symmetric solver)."""
    if g.num_vertices == 0:
        raise GraphError("empty graph")
    if g.num_vertices == 1:
        raise GraphError("lambda2 is undefined for a single vertex")
    if not g.is_connected():
        return 0.0
    L, _ = g.laplacian()
    return float(np.linalg.eigvalsh(L)[1])


def spectral_summary(g: Graph) -> SpectralSummary:
    return SpectralSummary(
        lambda2=laplacian_lambda2(g),
        max_degree=g.max_degree(),
        num_vertices=g.num_vertices,
        num_edges=g.num_edges,
    )


def _popcount(masks: np.ndarray, n: int) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(masks).astype(np.int64)
    out = np.zeros(masks.shape, np.int64)
    for b in range(n):
        out += (masks >> b) & 1
    return out


def _cut_tables(g: Graph):
    n = g.num_vertices
    if n < 2:
        raise GraphError("exact cut enumeration needs at least 2 vertices")
    if n > MAX_EXACT_CUT_VERTICES:
        raise GraphError("too large for exact cut enumeration")
    index = {v: i for i, v in enumerate(g.vertices)}
    triples = [(index[u], index[v], m) for u, v, m in g.edges()]
    eu = np.array([t[0] for t in triples], np.int64)
    ev = np.array([t[1] for t in triples], np.int64)
    em = np.array([t[2] for t in triples], np.int64)
    cut, inner = kernels.cut_table(n, eu, ev, em)
    masks = np.arange(1 << n, dtype=np.int64)
    return n, masks, cut, inner


def isoperimetric_exact(g: Graph) -> float:
    """min over 0 < |S| <= n/2 of cut(S) / |S|, by enumerating all subsets."""
    n, masks, cut, _ = _cut_tables(g)
    size = _popcount(masks, n)
    ok = (size > 0) & (2 * size <= n)
    return float(np.min(cut[ok] / size[ok]))


def conductance_exact(g: Graph) -> float:
    """Exact conductance under the edge-touching volume convention."""
    n, masks, cut, inner = _cut_tables(g)
    total = g.num_edges
    if total == 0:
        raise GraphError("conductance needs at least one edge")
    if not g.is_connected():
        return 0.0
    full = (1 << n) - 1
    vol = inner + cut
    proper = (masks > 0) & (masks < full) & (vol > 0)
    ok = proper & (2 * vol <= total)
    if not ok.any():
        vol_comp = inner[full ^ masks] + cut
        ok = proper & (vol <= vol_comp)
    return float(np.min(cut[ok] / vol[ok]))


def sampled_isoperimetric(g: Graph, samples: int, rng: np.random.Generator) -> float:
    """Upper estimate of I(G) from random vertex sets of size <= n/2."""
    verts = g.vertices
    n = len(verts)
    best = np.inf
    for _ in range(samples):
        s = int(rng.integers(1, n // 2 + 1))
        pick = set(rng.choice(n, size=s, replace=False).tolist())
        chosen = {verts[i] for i in pick}
        cut = sum(m for u, v, m in g.edges() if (u in chosen) != (v in chosen))
        best = min(best, cut / s)
    return float(best)


def spectral_lower_bound(
    g: Graph,
    *,
    sampled_cuts: int | None = None,
    rng: np.random.Generator | None = None,
) -> LowerBound:
    """Cheeger-type lower bound ``I(G)^2 / (2 * max_degree)`` on lambda2.

    Exact for graphs up to ``MAX_EXACT_CUT_VERTICES`` vertices. Beyond that,
    pass ``sampled_cuts`` to substitute a sampled estimate of ``I(G)``; the
    result is then flagged as not certified.
    """
    if g.num_vertices < 2:
        raise GraphError("lower bound needs at least 2 vertices")
    dmax = g.max_degree()
    if dmax < 1:
        raise GraphError("lower bound needs at least one edge")
    if g.num_vertices <= MAX_EXACT_CUT_VERTICES:
        iso, certified = isoperimetric_exact(g), True
    elif sampled_cuts:
        iso = sampled_isoperimetric(g, sampled_cuts, rng or np.random.default_rng())
        certified = False
    else:
        raise GraphError("too large for exact cut enumeration")
    return LowerBound(iso * iso / (2 * dmax), iso, dmax, certified)


# -- construction --------------------------------------------------------------


def erdos_renyi(
    n: int,
    p: float,
    rng: np.random.Generator,
    *,
    connected: bool = True,
    max_tries: int = 10_000,
) -> Graph:
    """G(n, p) on vertices 0..n-1, resampled until connected when asked."""
    if n < 1:
        raise GraphError("need at least one vertex")
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        keep = rng.random(iu.size) < p
        g = Graph(range(n), zip(iu[keep].tolist(), ju[keep].tolist()))
        if not connected or g.is_connected():
            return g
    raise GraphError(f"no connected G({n}, {p}) sample after {max_tries} tries")


# -- serialization -----------------------------------------------------------------


def dumps_edge_list(g: Graph) -> str:
    """Header ``<num_vertices>``, a line of vertex ids, then one ``u v`` per edge.

    Parallel edges appear once per copy.
    """
    lines = [str(g.num_vertices), " ".join(str(v) for v in g.vertices)]
    lines += [f"{u} {v}" for u, v in g.edge_list()]
    return "\n".join(lines) + "\n"


def loads_edge_list(text: str) -> Graph:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip()]
    if not lines:
        raise GraphError("empty edge-list document")
    n = int(lines[0])
    ids = [int(tok) for tok in lines[1].split()] if n else []
    if len(ids) != n:
        raise GraphError(f"header announces {n} vertices, found {len(ids)}")
    body = lines[2:] if n else lines[1:]
    edges = []
    for ln in body:
        u, v = ln.split()
        edges.append((int(u), int(v)))
    g = Graph(ids)
    for u, v in edges:
        g.add_edge(u, v)
    return g


def write_edge_list(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_edge_list(g))


def read_edge_list(path: str | os.PathLike) -> Graph:
    with open(path) as fh:
        return loads_edge_list(fh.read())

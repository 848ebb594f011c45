"""Continuous-time random walks with an exponential clock.

A walk first moves to a uniform neighbour of its start. Then, at each vertex
``v``, it draws ``U`` in (0, 1], decrements its remaining time by
``log(1/U) / deg(v)``, and stops at ``v`` if the time is used up; otherwise it
moves to a uniform neighbour (parallel edges weigh in by multiplicity).
Holding times are therefore ``Exp(deg(v))`` and the walk's generator is
``-L``, whose stationary law is uniform. Logarithms are natural throughout.

The ``cluster_size_weighted`` bias scales each decrement by ``|C_v| / scale**2``
so the stationary law becomes proportional to cluster size.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import kernels
from .graph import Graph, GraphError, PackedAdjacency

MAX_EXACT_VERTICES = 512


class Bias(enum.Enum):
    UNIFORM = "uniform"
    CLUSTER_SIZE_WEIGHTED = "cluster_size_weighted"


@dataclass(frozen=True)
class WalkBudget:
    total_time: float
    bias: Bias = Bias.UNIFORM

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValueError("walk budget must be positive")


@dataclass(frozen=True)
class WalkOutcome:
    endpoint: Hashable
    path: tuple
    hops: int
    clock_draws: tuple


def mixing_budget(n: float, lambda2: float) -> float:
    """``log(n)**2 / lambda2``.

    With the overlay's certified floor ``lambda2 >= 1/8`` and ``log n``
    replaced by the scale parameter, this becomes ``8 * scale**2``.
    """
    if lambda2 <= 0:
        raise ValueError("disconnected graph has no mixing time")
    if n < 2:
        raise ValueError("mixing budget needs n >= 2")
    return math.log(n) ** 2 / lambda2


def overlay_budget(scale: int) -> float:
    """Walk time used on the maintained overlay: ``8 * scale**2``."""
    return mixing_budget(math.e**scale, 1 / 8)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def _decrement_weights(packed: PackedAdjacency, budget: WalkBudget, sizes, scale) -> np.ndarray:
    w = np.ones(packed.deg.shape[0])
    if budget.bias is Bias.CLUSTER_SIZE_WEIGHTED:
        if sizes is None or scale is None:
            raise ValueError("cluster_size_weighted walks need sizes and scale")
        for v, i in packed.index.items():
            w[i] = sizes[v] / scale**2
    return w


def ctrw_sample(
    g: Graph,
    start: Hashable,
    budget: WalkBudget,
    rng: np.random.Generator,
    *,
    sizes: Mapping | None = None,
    scale: int | None = None,
    packed: PackedAdjacency | None = None,
) -> WalkOutcome:
    """Run one walk from ``start`` and report where its clock ran out."""
    if start not in g:
        raise GraphError(f"start vertex {start!r} not in graph")
    if g.degree(start) == 0:
        raise GraphError("isolated vertex")
    if packed is None or packed.source_version != g.version:
        packed = g.packed()
    weights = _decrement_weights(packed, budget, sizes, scale)
    seed = _seed(rng)
    cap = 256
    while True:
        path, clocks, n_path, n_clock, ok = kernels.walk_path(
            packed.nbr, packed.deg, weights, packed.index[start], float(budget.total_time), seed, cap
        )
        if ok:
            break
        cap *= 4
    verts = packed.vertices
    p = tuple(verts[i] for i in path[:n_path])
    return WalkOutcome(endpoint=p[-1], path=p, hops=n_path - 1, clock_draws=tuple(clocks[:n_clock].tolist()))


def walk_endpoints(
    packed: PackedAdjacency,
    starts: Sequence[int],
    total_time: float,
    rng: np.random.Generator,
    *,
    stop: np.ndarray | None = None,
    weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch of uniform-bias walks on row indices of ``packed``.

    Walks entering a vertex flagged in ``stop`` end there immediately.
    Returns ``(endpoint_rows, hops)``.
    """
    n = packed.deg.shape[0]
    if stop is None:
        stop = np.zeros(n, np.bool_)
    if weights is None:
        weights = np.ones(n)
    starts = np.asarray(starts, np.int64)
    if np.any(packed.deg[starts] == 0):
        raise GraphError("isolated vertex")
    return kernels.walk_endpoints(packed.nbr, packed.deg, weights, stop, starts, float(total_time), _seed(rng))


# -- exact distributions ------------------------------------------------------------


def _heat_kernel(g: Graph, t: float, weights=None) -> tuple[np.ndarray, list]:
    """``exp(t Q)`` for the walk generator ``Q = -W^{-1} L`` (``W = I`` by default)."""
    if g.num_vertices > MAX_EXACT_VERTICES:
        raise GraphError(f"exact walk distribution limited to {MAX_EXACT_VERTICES} vertices")
    L, order = g.laplacian()
    if weights is None:
        vals, vecs = np.linalg.eigh(L)
        return (vecs * np.exp(-t * np.clip(vals, 0.0, None))) @ vecs.T, order
    w = np.array([float(weights[v]) for v in order])
    s = np.sqrt(w)
    vals, vecs = np.linalg.eigh(L / np.outer(s, s))
    K = (vecs * np.exp(-t * np.clip(vals, 0.0, None))) @ vecs.T
    return K / s[:, None] * s[None, :], order


def exact_walk_distribution(g: Graph, start: Hashable, t: float) -> np.ndarray:
    """Row ``start`` of ``exp(-t L)``: the walk's position law at time ``t``.

    Ordered like ``g.vertices``.
    """
    if start not in g:
        raise GraphError(f"start vertex {start!r} not in graph")
    if t < 0:
        raise ValueError("time must be non-negative")
    K, order = _heat_kernel(g, t)
    row = K[order.index(start)]
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def _first_move_matrix(g: Graph, order: list) -> np.ndarray:
    index = {v: i for i, v in enumerate(order)}
    n = len(order)
    P = np.zeros((n, n))
    for v in order:
        d = g.degree(v)
        if d == 0:
            P[index[v], index[v]] = 1.0
            continue
        for u, m in ((u, g.multiplicity(v, u)) for u in g.neighbors(v)):
            P[index[v], index[u]] = m / d
    return P


def endpoint_distribution(g: Graph, start: Hashable, total_time: float, weights: Mapping | None = None) -> np.ndarray:
    """Exact law of ``ctrw_sample``'s endpoint, forced first move included.

    ``weights`` gives the per-vertex decrement factor of a biased walk.
    """
    K, order = _heat_kernel(g, total_time, weights)
    P = _first_move_matrix(g, order)
    row = P[order.index(start)] @ K
    row = np.clip(row, 0.0, None)
    return row / row.sum()


def tv_distance(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if p.shape != q.shape:
        raise ValueError("length mismatch")
    for name, x in (("p", p), ("q", q)):
        if abs(x.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} does not sum to 1")
    return float(0.5 * np.abs(p - q).sum())


def mixing_bound(n: int, lambda2: float, t: float) -> float:
    """``sqrt(n)/2 * exp(-lambda2 * t)``: TV bound after walking for ``t``."""
    return math.sqrt(n) / 2 * math.exp(-lambda2 * t)


class ExactEndpointSampler:
    """Draws walk endpoints from their exact law instead of stepping.

    Valid for uniform-bias walks whose every draw is fair. The matrix is
    ``P @ expm(-T L)`` with ``P`` the forced first move.
    """

    def __init__(self, g: Graph, total_time: float):
        K, order = _heat_kernel(g, total_time)
        M = _first_move_matrix(g, order) @ K
        M = np.clip(M, 0.0, None)
        M /= M.sum(axis=1, keepdims=True)
        self.cum = np.cumsum(M, axis=1)
        self.cum[:, -1] = 1.0
        self.vertices = order
        self.index = {v: i for i, v in enumerate(order)}
        self.source_version = g.version
        self.expected_hops = 1.0 + total_time * (2 * g.num_edges / max(g.num_vertices, 1))

    def sample_rows(self, start_row: int, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(count)
        return np.searchsorted(self.cum[start_row], u, side="right").clip(max=len(self.vertices) - 1)


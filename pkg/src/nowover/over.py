"""Expander overlay maintenance under vertex churn.

Every event touches ``2 * scale**2`` edges whose far endpoints come from
continuous-time random walks of length ``8 * scale**2``. ``scale`` is an
integer stand-in for ``log N``, so the degree reference is ``scale**4``.

An added vertex is linked to walk endpoints started at its entry point. A
removed vertex first repairs the graph by linking pairs of walk endpoints
(walks start at the leaving vertex) and only then disappears with its edges.
A crashed vertex disappears without repair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .ctrw import overlay_budget, walk_endpoints
from .graph import Graph, GraphError, PackedAdjacency, erdos_renyi

MAX_RESAMPLES = 100

# walk(packed, start_row, count, rng) -> (end_rows, total_hops)
WalkFn = Callable[[PackedAdjacency, int, int, np.random.Generator], tuple]


class EventKind(enum.Enum):
    ADD = "add"
    REMOVE = "remove"
    CRASH = "crash"


@dataclass
class OverlayEvent:
    kind: EventKind
    vertex: Hashable
    edges_touched: list = field(default_factory=list)
    walk_hops_total: int = 0
    edges_deleted: int = 0
    degenerate: bool = False


class OverlayState:
    def __init__(self, graph: Graph, scale: int, *, keep_history: bool = True):
        if scale < 1:
            raise ValueError("scale must be a positive integer")
        self.graph = graph
        self.scale = int(scale)
        self.history: list[OverlayEvent] = []
        self.keep_history = keep_history
        self.seed_edges = graph.num_edges
        self.links_added = 0
        self.edges_deleted = 0
        self.walk_hops = 0

    @property
    def edges_per_event(self) -> int:
        return 2 * self.scale**2

    @property
    def degree_cap_reference(self) -> int:
        return self.scale**4

    @property
    def walk_time(self) -> float:
        return overlay_budget(self.scale)

    def default_walk(self, packed: PackedAdjacency, start: int, count: int, rng) -> tuple:
        ends, hops = walk_endpoints(packed, np.full(count, start), self.walk_time, rng)
        return ends, int(hops.sum())

    def _record(self, ev: OverlayEvent) -> OverlayEvent:
        self.links_added += len(ev.edges_touched)
        self.edges_deleted += ev.edges_deleted
        self.walk_hops += ev.walk_hops_total
        if self.keep_history:
            self.history.append(ev)
        return ev

    def expected_edge_count(self) -> int:
        return self.seed_edges + self.links_added - self.edges_deleted


def seed_overlay(n0: int, scale: int, rng: np.random.Generator, **kw) -> OverlayState:
    """Connected ``G(n0, scale**2 / n0)`` on vertices ``0..n0-1``."""
    p = min(1.0, scale**2 / n0) if n0 > 1 else 0.0
    return OverlayState(erdos_renyi(n0, p, rng), scale, **kw)


def link(state: OverlayState, u: Hashable, v: Hashable) -> None:
    state.graph.add_edge(u, v)


def add_vertex(
    state: OverlayState,
    entry_point: Hashable,
    new_vertex: Hashable,
    rng: np.random.Generator,
    *,
    walk: WalkFn | None = None,
) -> OverlayEvent:
    g = state.graph
    if new_vertex in g:
        raise GraphError(f"vertex {new_vertex!r} already present")
    if entry_point not in g:
        raise GraphError(f"entry point {entry_point!r} not present")
    walk = walk or state.default_walk
    lone = g.degree(entry_point) == 0
    g.add_vertex(new_vertex)
    packed = g.packed(spare=state.edges_per_event)
    me = packed.index[new_vertex]
    entry = packed.index[entry_point]
    ev = OverlayEvent(EventKind.ADD, new_vertex)
    for _ in range(state.edges_per_event):
        if lone:
            # the entry point is the only vertex the walk could ever reach
            target = entry
        else:
            for _ in range(MAX_RESAMPLES):
                ends, hops = walk(packed, entry, 1, rng)
                ev.walk_hops_total += hops
                target = int(ends[0])
                if target != me:
                    break
            else:
                raise GraphError("walks keep ending at the new vertex")
        u = packed.vertices[target]
        g.add_edge(new_vertex, u)
        packed.link(me, target)
        ev.edges_touched.append((new_vertex, u))
    return state._record(ev)


def remove_vertex(
    state: OverlayState,
    v: Hashable,
    rng: np.random.Generator,
    *,
    walk: WalkFn | None = None,
) -> OverlayEvent:
    g = state.graph
    if v not in g:
        raise GraphError(f"vertex {v!r} not present")
    if g.num_vertices == 1:
        raise GraphError("would disconnect to empty")
    walk = walk or state.default_walk
    ev = OverlayEvent(EventKind.REMOVE, v)
    if g.num_vertices == 2 or g.degree(v) == 0:
        # no two distinct survivors can be linked; the rest is left as is
        ev.degenerate = True
    else:
        packed = g.packed(spare=2 * state.edges_per_event)
        me = packed.index[v]
        for _ in range(state.edges_per_event):
            for _ in range(MAX_RESAMPLES):
                ends, hops = walk(packed, me, 2, rng)
                ev.walk_hops_total += hops
                a, b = int(ends[0]), int(ends[1])
                if a != me and b != me and a != b:
                    break
            else:
                if _reachable_others(g, v) < 2:
                    # v sits in a cut-off piece with a single other vertex
                    ev.degenerate = True
                    break
                raise GraphError("no distinct repair endpoints after resampling")
            x, y = packed.vertices[a], packed.vertices[b]
            g.add_edge(x, y)
            packed.link(a, b)
            ev.edges_touched.append((x, y))
    ev.edges_deleted = g.remove_vertex(v)
    return state._record(ev)


def _reachable_others(g, v) -> int:
    seen, todo = {v}, [v]
    while todo:
        for u in g.neighbors(todo.pop()):
            if u not in seen:
                seen.add(u)
                todo.append(u)
    return len(seen) - 1


def crash_vertex(state: OverlayState, v: Hashable) -> OverlayEvent:
    g = state.graph
    if v not in g:
        raise GraphError(f"vertex {v!r} not present")
    if g.num_vertices == 1:
        raise GraphError("would disconnect to empty")
    ev = OverlayEvent(EventKind.CRASH, v)
    ev.edges_deleted = g.remove_vertex(v)
    return state._record(ev)


def churn(
    state: OverlayState,
    events: int,
    rng: np.random.Generator,
    *,
    p_add: float = 0.5,
    min_vertices: int = 3,
    on_step: Callable[[int, OverlayState], None] | None = None,
) -> None:
    """Apply ``events`` random add/remove events, one per step.

    New vertices enter at a uniformly random live vertex and the removed
    vertex is uniform too. Removes below ``min_vertices`` become adds.
    """
    g = state.graph
    next_id = max((v for v in g.vertices if isinstance(v, int)), default=-1) + 1
    for step in range(1, events + 1):
        verts = g.vertices
        if rng.random() < p_add or len(verts) <= min_vertices:
            entry = verts[int(rng.integers(len(verts)))]
            add_vertex(state, entry, next_id, rng)
            next_id += 1
        else:
            remove_vertex(state, verts[int(rng.integers(len(verts)))], rng)
        if on_step is not None:
            on_step(step, state)

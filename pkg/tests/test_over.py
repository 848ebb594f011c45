import numpy as np
import pytest

from nowover import over
from nowover.ctrw import endpoint_distribution, tv_distance
from nowover.graph import Graph, GraphError, erdos_renyi

from conftest import complete


def state_of(g, lam=1):
    return over.OverlayState(g, lam)


def test_state_constants():
    s = state_of(complete(3), lam=2)
    assert s.edges_per_event == 8 and s.degree_cap_reference == 16
    assert s.walk_time == pytest.approx(32.0)


def test_link_fresh_and_parallel():
    s = state_of(Graph([0, 1]))
    over.link(s, 0, 1)
    assert s.graph.multiplicity(0, 1) == 1
    over.link(s, 0, 1)
    assert s.graph.multiplicity(0, 1) == 2


def test_link_self_loop_and_missing():
    s = state_of(Graph([0, 1]))
    with pytest.raises(GraphError, match="self-loop forbidden"):
        over.link(s, 0, 0)
    with pytest.raises(GraphError):
        over.link(s, 0, 9)


def test_add_to_triangle_gains_two_edges(rng):
    s = state_of(complete(3), lam=1)
    ev = over.add_vertex(s, 0, 3, rng)
    assert s.graph.degree(3) == 2 and len(ev.edges_touched) == 2
    assert all(u == 3 and v in (0, 1, 2) for u, v in ev.edges_touched)
    assert ev.kind is over.EventKind.ADD


def test_add_to_single_vertex_gives_parallel_edges(rng):
    s = state_of(Graph([0]), lam=1)
    over.add_vertex(s, 0, 1, rng)
    assert s.graph.multiplicity(0, 1) == 2


def test_add_errors(rng):
    s = state_of(complete(3))
    with pytest.raises(GraphError):
        over.add_vertex(s, 0, 1, rng)
    with pytest.raises(GraphError):
        over.add_vertex(s, 7, 8, rng)


def test_add_endpoints_follow_walk_law(rng):
    g = erdos_renyi(8, 0.6, np.random.default_rng(3))
    counts = np.zeros(8)
    trials = 10_000
    for _ in range(trials):
        s = state_of(g.copy(), lam=1)
        ev = over.add_vertex(s, 0, 99, rng)
        counts[ev.edges_touched[0][1]] += 1
    freq = counts / trials
    # first link: walks from the entry point on the graph that already holds the new vertex
    # (isolated, never reached), so the law is the walk law on g itself
    exact = endpoint_distribution(g, 0, 8.0)
    assert tv_distance(freq, exact) <= 0.05
    assert tv_distance(freq, np.full(8, 1 / 8)) <= 0.05


def test_remove_adds_repair_edges_then_deletes(rng):
    g = Graph(range(5), [(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 2)])
    s = state_of(g, lam=1)
    ev = over.remove_vertex(s, 4, rng)
    assert 4 not in s.graph
    assert len(ev.edges_touched) == 2 and ev.edges_deleted == 2 + sum(4 in e for e in ev.edges_touched)
    assert all(a != b and 4 not in (a, b) for a, b in ev.edges_touched)
    assert s.graph.is_connected()


def test_remove_two_vertex_graph_is_degenerate(rng):
    s = state_of(Graph([0, 1], [(0, 1)]))
    ev = over.remove_vertex(s, 1, rng)
    assert ev.degenerate and s.graph.vertices == [0] and s.graph.num_edges == 0
    with pytest.raises(GraphError, match="would disconnect to empty"):
        over.remove_vertex(s, 0, rng)


def test_remove_missing(rng):
    with pytest.raises(GraphError):
        over.remove_vertex(state_of(complete(3)), 5, rng)


def test_crash_examples():
    s = state_of(complete(4))
    ev = over.crash_vertex(s, 0)
    assert ev.edges_touched == [] and ev.edges_deleted == 3
    assert s.graph.num_edges == 3 and s.graph.num_vertices == 3
    over.crash_vertex(s, 1)
    over.crash_vertex(s, 2)
    assert s.graph.vertices == [3] and s.graph.num_edges == 0
    with pytest.raises(GraphError):
        over.crash_vertex(s, 3)
    with pytest.raises(GraphError):
        over.crash_vertex(s, 9)


def test_edge_count_accounting(rng):
    s = over.seed_overlay(30, 2, rng)
    over.churn(s, 200, rng)
    for i in range(5):
        over.crash_vertex(s, s.graph.vertices[i])
    assert s.graph.num_edges == s.expected_edge_count()
    counted = sum(len(e.edges_touched) for e in s.history if e.kind is not over.EventKind.CRASH)
    assert counted == 8 * sum(e.kind is not over.EventKind.CRASH and not e.degenerate for e in s.history)


def test_seed_overlay_connected(rng):
    for _ in range(10):
        s = over.seed_overlay(40, 2, rng)
        assert s.graph.is_connected() and s.graph.num_vertices == 40


def test_custom_walk_function_is_used(rng):
    s = state_of(complete(4), lam=1)
    calls = []

    def walk(packed, start, count, rng):
        calls.append(count)
        return np.full(count, packed.index[2]), count

    over.add_vertex(s, 0, 4, rng, walk=walk)
    assert s.graph.multiplicity(4, 2) == 2 and calls == [1, 1]


def test_graceful_removes_keep_maintained_overlay_connected():
    # maintained lambda=2 overlay; 500 removes, each followed by an add to hold the size
    failures = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        s = over.seed_overlay(50, 2, rng, keep_history=False)
        over.churn(s, 200, rng)
        next_id = max(s.graph.vertices) + 1
        for _ in range(500):
            verts = s.graph.vertices
            over.remove_vertex(s, verts[int(rng.integers(len(verts)))], rng)
            if not s.graph.is_connected():
                failures += 1
                break
            verts = s.graph.vertices
            over.add_vertex(s, verts[int(rng.integers(len(verts)))], next_id, rng)
            next_id += 1
    assert failures == 0

import itertools

import networkx as nx
import numpy as np
import pytest

from nowover.graph import Graph


def complete(n):
    return Graph(range(n), itertools.combinations(range(n), 2))


def cycle(n):
    return Graph(range(n), [(i, (i + 1) % n) for i in range(n)])


def path(n):
    return Graph(range(n), [(i, i + 1) for i in range(n - 1)])


def star(leaves):
    return Graph(range(leaves + 1), [(0, i) for i in range(1, leaves + 1)])


def to_nx(g: Graph) -> nx.MultiGraph:
    h = nx.MultiGraph()
    h.add_nodes_from(g.vertices)
    for u, v in g.edge_list():
        h.add_edge(u, v)
    return h


def random_connected(n, p, rng):
    while True:
        h = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if nx.is_connected(h):
            return Graph(range(n), h.edges())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

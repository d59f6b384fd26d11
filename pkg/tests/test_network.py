"""Network loading, validation, and shortest-path queries.

networkx is the independent distance oracle throughout.
"""

import math

import networkx as nx
import numpy as np
import pytest

from ridepool.errors import DataError, QueryError
from ridepool.network import load_network, load_network_files

from conftest import make_grid


def _random_graph(rng, n, m):
    nodes = [(i, float(rng.uniform(0, 10)), float(rng.uniform(0, 10))) for i in range(n)]
    edges = []
    seen = set()
    while len(edges) < m:
        a = int(rng.integers(0, n))
        b = int(rng.integers(0, n))
        if a == b or (a, b) in seen:
            continue
        seen.add((a, b))
        edges.append((a, b, float(rng.integers(1, 120))))
    return nodes, edges


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_distances_match_networkx(seed):
    rng = np.random.default_rng(seed)
    nodes, edges = _random_graph(rng, 40, 200)
    net = load_network(nodes, edges)

    g = nx.DiGraph()
    g.add_nodes_from(range(40))
    for a, b, w in edges:
        # keep the minimum when the random generator produced parallel edges
        if g.has_edge(a, b):
            g[a][b]["weight"] = min(g[a][b]["weight"], w)
        else:
            g.add_edge(a, b, weight=w)

    for s in range(40):
        oracle = nx.single_source_dijkstra_path_length(g, s)
        for t in range(40):
            expect = oracle.get(t, math.inf)
            assert net.travel_time(s, t) == pytest.approx(expect, abs=1e-9), (s, t)


def test_self_distance_zero_and_unreachable(grid5):
    assert grid5.travel_time(3, 3) == 0.0
    nodes = [(0, 0.0, 0.0), (1, 1.0, 0.0)]
    net = load_network(nodes, [(0, 1, 5.0)])
    assert net.travel_time(0, 1) == 5.0
    assert math.isinf(net.travel_time(1, 0))
    with pytest.raises(QueryError):
        net.shortest_path(1, 0)


def test_shortest_path_consistent_with_travel_time(grid5):
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = int(rng.integers(0, grid5.n_nodes))
        b = int(rng.integers(0, grid5.n_nodes))
        p = grid5.shortest_path(a, b)
        assert p[0] == a and p[-1] == b
        assert grid5.path_duration(p) == grid5.travel_time(a, b)


def test_path_tie_break_prefers_smaller_next_node():
    # two equal-cost routes 0->1->3 and 0->2->3; the returned path must take 1
    nodes = [(i, float(i), 0.0) for i in range(4)]
    edges = [(0, 1, 60.0), (0, 2, 60.0), (1, 3, 60.0), (2, 3, 60.0)]
    net = load_network(nodes, edges)
    assert net.shortest_path(0, 3) == [0, 1, 3]


def test_lazy_rows_equal_eager_matrix():
    eager = make_grid(6, 6)
    lazy = make_grid(6, 6, eager_limit=0)
    assert np.array_equal(eager.matrix(), lazy.matrix())
    assert lazy.travel_time(0, 35) == eager.travel_time(0, 35)


def test_recompute_matches_cached(grid5):
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = int(rng.integers(0, grid5.n_nodes))
        b = int(rng.integers(0, grid5.n_nodes))
        assert grid5.recompute_travel_time(a, b) == grid5.travel_time(a, b)


def test_validation_errors_name_the_record():
    with pytest.raises(DataError, match="duplicate node id '7'"):
        load_network([(7, 0, 0), (7, 1, 1)], [])
    with pytest.raises(DataError, match="unknown node '9'"):
        load_network([(0, 0, 0), (1, 1, 1)], [(0, 9, 10.0)])
    with pytest.raises(DataError, match="non-positive travel time"):
        load_network([(0, 0, 0), (1, 1, 1)], [(0, 1, 0.0)])
    with pytest.raises(DataError, match="no nodes"):
        load_network([], [])


def test_file_roundtrip(tmp_path):
    np_path = tmp_path / "nodes.csv"
    ep_path = tmp_path / "edges.csv"
    np_path.write_text("node_id,x,y\na,0,0\nb,1.5,0\nc,1.5,2\n")
    ep_path.write_text("from,to,travel_time_seconds\na,b,30\nb,c,45\nc,a,90\n")
    net = load_network_files(np_path, ep_path)
    assert net.n_nodes == 3
    ia, ic = net.node_index("a"), net.node_index("c")
    assert net.travel_time(ia, ic) == 75.0
    assert net.external_id(ia) == "a"


def test_file_header_required(tmp_path):
    p = tmp_path / "nodes.csv"
    p.write_text("0,0,0\n1,1,1\n")
    e = tmp_path / "edges.csv"
    e.write_text("from,to,travel_time_seconds\n")
    with pytest.raises(DataError, match="header"):
        load_network_files(p, e)


def test_whitespace_delimited_files(tmp_path):
    np_path = tmp_path / "nodes.txt"
    ep_path = tmp_path / "edges.txt"
    np_path.write_text("node_id x y\n0 0 0\n1 1 0\n")
    ep_path.write_text("from to travel_time_seconds\n0 1 12\n")
    net = load_network_files(np_path, ep_path)
    assert net.travel_time(0, 1) == 12.0


def test_invalid_node_id_raises(grid5):
    with pytest.raises(QueryError):
        grid5.travel_time(-1, 0)
    with pytest.raises(QueryError):
        grid5.travel_time(0, grid5.n_nodes)
    with pytest.raises(QueryError):
        grid5.node_index("nope")

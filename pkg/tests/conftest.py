import numpy as np
import pytest

from ridepool.fleet import Request
from ridepool.network import load_network


def make_grid(rows, cols, edge_seconds=60.0, eager_limit=2000):
    """Bidirectional grid network; node id = r * cols + c, coords in miles."""
    nodes = []
    for r in range(rows):
        for c in range(cols):
            nodes.append((r * cols + c, c * 0.25, r * 0.25))
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1, edge_seconds))
                edges.append((u + 1, u, edge_seconds))
            if r + 1 < rows:
                edges.append((u, u + cols, edge_seconds))
                edges.append((u + cols, u, edge_seconds))
    return load_network(nodes, edges, eager_limit=eager_limit)


@pytest.fixture(scope="session")
def grid5():
    return make_grid(5, 5)


@pytest.fixture(scope="session")
def grid15():
    return make_grid(15, 15)


def random_request(net, rng, rid, now=0.0, max_wait=300.0, max_delay=600.0):
    n = net.n_nodes
    o = int(rng.integers(0, n))
    d = int(rng.integers(0, n))
    while d == o:
        d = int(rng.integers(0, n))
    return Request(
        id=rid,
        origin=o,
        destination=d,
        request_time=now,
        direct_time=net.travel_time(o, d),
        max_wait=max_wait,
        max_delay=max_delay,
    )

"""Synthetic benchmark scenarios: grid networks and seeded Poisson demand.

The demand process has a moving hotspot: every ``hotspot_period_s`` seconds
the high-probability origin region jumps to the next grid quadrant, which
gives the demand forecast something nonstationary to chase.  History days
are drawn i.i.d. from the same process, so a model fitted on them matches
the simulated day in distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .fleet import Request
from .network import Network, load_network

DEFAULT_BLOCK_MILES = 0.25


def grid_network(rows: int, cols: int, edge_seconds: float = 60.0,
                 block_miles: float = DEFAULT_BLOCK_MILES) -> Network:
    """Bidirectional rows x cols lattice; node id = row * cols + col."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ConfigError("grid needs at least two nodes")
    if edge_seconds <= 0 or block_miles <= 0:
        raise ConfigError("edge_seconds and block_miles must be positive")
    nodes = [(r * cols + c, c * block_miles, r * block_miles)
             for r in range(rows) for c in range(cols)]
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
    return load_network(nodes, edges)


def _quadrant_nodes(rows: int, cols: int) -> List[List[int]]:
    """Four quadrants in fixed order: NW, NE, SW, SE."""
    half_r, half_c = rows // 2, cols // 2
    quads: List[List[int]] = [[], [], [], []]
    for r in range(rows):
        for c in range(cols):
            q = (0 if r < half_r else 2) + (0 if c < half_c else 1)
            quads[q].append(r * cols + c)
    return [q for q in quads if q]


@dataclass
class DemandSpec:
    rows: int
    cols: int
    rate_per_epoch: float = 4.0
    n_epochs: int = 720
    epoch_s: float = 30.0
    omega_s: float = 300.0
    delta_s: float = 600.0
    hotspot_period_s: float = 1800.0
    hotspot_weight: float = 0.7   # fraction of origins drawn from the hotspot

    def validate(self) -> None:
        if self.rate_per_epoch < 0:
            raise ConfigError("rate_per_epoch must be non-negative")
        if self.n_epochs < 0:
            raise ConfigError("n_epochs must be non-negative")
        if self.epoch_s <= 0 or self.hotspot_period_s <= 0:
            raise ConfigError("epoch_s and hotspot_period_s must be positive")
        if not 0.0 <= self.hotspot_weight <= 1.0:
            raise ConfigError("hotspot_weight must lie in [0, 1]")


def generate_requests(net: Network, spec: DemandSpec, seed: int,
                      start_id: int = 0) -> List[Request]:
    """One day of Poisson demand with origins biased toward a moving hotspot."""
    spec.validate()
    rng = np.random.default_rng(seed)
    quads = _quadrant_nodes(spec.rows, spec.cols)
    n = net.n_nodes
    out: List[Request] = []
    rid = start_id
    for e in range(1, spec.n_epochs + 1):
        t_lo = (e - 1) * spec.epoch_s
        count = int(rng.poisson(spec.rate_per_epoch))
        times = sorted(float(t_lo + rng.random() * spec.epoch_s)
                       for _ in range(count))
        for t in times:
            hot = quads[int(t // spec.hotspot_period_s) % len(quads)]
            if rng.random() < spec.hotspot_weight:
                o = int(hot[int(rng.integers(0, len(hot)))])
            else:
                o = int(rng.integers(0, n))
            d = int(rng.integers(0, n))
            while d == o:
                d = int(rng.integers(0, n))
            out.append(Request(
                id=rid, origin=o, destination=d, request_time=t,
                direct_time=net.travel_time(o, d),
                max_wait=spec.omega_s, max_delay=spec.delta_s,
            ))
            rid += 1
    return out


def generate_history(net: Network, spec: DemandSpec, days: int,
                     seed: int) -> List[List[Request]]:
    """Independent days of the same process (per-day derived seeds)."""
    if days < 0:
        raise ConfigError("days must be non-negative")
    return [generate_requests(net, spec, seed * 9176 + day + 1)
            for day in range(days)]


# ------------------------------------------------------------------ files

def save_network_files(net: Network, nodes_path: str, edges_path: str) -> None:
    with open(nodes_path, "w", encoding="utf-8") as fh:
        fh.write("node_id,x,y\n")
        for i in range(net.n_nodes):
            x, y = net.coords[i]
            fh.write(f"{net.external_ids[i]},{float(x)!r},{float(y)!r}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("from,to,travel_time_seconds\n")
        for u, v, w in net.edges:
            fh.write(f"{net.external_ids[u]},{net.external_ids[v]},{float(w)!r}\n")


def save_requests(requests: Sequence[Request], path: str) -> None:
    """direct_time is derived data and recomputed at load, so not stored."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,origin,destination,request_time,max_wait,max_delay\n")
        for r in sorted(requests, key=lambda r: r.id):
            fh.write(f"{r.id},{r.origin},{r.destination},"
                     f"{r.request_time!r},{r.max_wait!r},{r.max_delay!r}\n")


def load_requests(path: str, net: Network) -> List[Request]:
    out: List[Request] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,origin,destination,request_time,max_wait,max_delay":
            raise DataError(f"{path}: unexpected header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields")
            try:
                rid, o, d = int(parts[0]), int(parts[1]), int(parts[2])
                t, mw, md = float(parts[3]), float(parts[4]), float(parts[5])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not (0 <= o < net.n_nodes and 0 <= d < net.n_nodes):
                raise DataError(f"{path}:{lineno}: node id out of range")
            tt = net.travel_time(o, d)
            if math.isinf(tt):
                raise DataError(f"{path}:{lineno}: destination unreachable")
            out.append(Request(id=rid, origin=o, destination=d,
                               request_time=t, direct_time=tt,
                               max_wait=mw, max_delay=md))
    return out

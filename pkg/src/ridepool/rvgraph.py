"""Shareability graphs: request-request/request-vehicle edges, trip growth,
the shrink-only feasible-vehicle cache, and request partitioning.

The cache exploits that travel times are static: once a (request, vehicle)
pair is infeasible it stays infeasible (the executed route prefix plus any
later feasible continuation would witness feasibility earlier, and deleting
stops from a feasible route never breaks it under metric travel times).  So
each epoch only re-tests pairs that were feasible last epoch, and pairs
outside the cached set can be skipped without changing any result.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .cluster import kmeans
from .errors import InternalError
from .fleet import Request, VehicleState
from .pdp import PDPQuery, best_route


@dataclass
class RVGraph:
    rr_edges: Set[Tuple[int, int]] = field(default_factory=set)   # (lo, hi) request ids
    rv_edges: Dict[Tuple[int, int], float] = field(default_factory=dict)  # (rid, vid) -> cost
    rv_routes: Dict[Tuple[int, int], list] = field(default_factory=dict)
    pdp_calls: int = 0
    explored: int = 0      # kernel candidate-extension count, the work proxy


@dataclass
class RTVGraph:
    trips: Set[tuple] = field(default_factory=set)                 # sorted request-id tuples
    tv_edges: Dict[Tuple[tuple, int], Tuple[float, list]] = field(default_factory=dict)
    vehicle_trips: Dict[int, List[tuple]] = field(default_factory=dict)
    complete: Dict[int, bool] = field(default_factory=dict)        # per-vehicle budget flag
    pdp_calls: int = 0
    explored: int = 0

    def trips_for_request(self, rid: int) -> List[tuple]:
        return sorted(t for t in self.trips if rid in t)


class FeasibleVehicleCache:
    """Per-request set of vehicles that may still serve it (single requests only).

    Sets only ever shrink; an empty set means the request can be skipped in
    all future graph construction (it will still expire normally).
    """

    def __init__(self):
        self._sets: Dict[int, Set[int]] = {}
        self.created_epoch: Dict[int, int] = {}

    def __contains__(self, rid: int) -> bool:
        return rid in self._sets

    def get(self, rid: int) -> Optional[Set[int]]:
        return self._sets.get(rid)

    def update(self, rid: int, feasible: Set[int], epoch: int = 0) -> None:
        prev = self._sets.get(rid)
        if prev is not None and not feasible <= prev:
            raise InternalError(f"cache for request {rid} tried to grow")
        if prev is None:
            self.created_epoch[rid] = epoch
        self._sets[rid] = set(feasible)

    def drop(self, rid: int) -> None:
        self._sets.pop(rid, None)
        self.created_epoch.pop(rid, None)

    def excluded_pairs(self, rids: Iterable[int], vids: Iterable[int]):
        """(request, vehicle) pairs the cache rules out; audit helper."""
        out = []
        for rid in rids:
            allowed = self._sets.get(rid)
            if allowed is None:
                continue
            for vid in vids:
                if vid not in allowed:
                    out.append((rid, vid))
        return out


def vehicle_position(v: VehicleState, now: float) -> Tuple[int, float]:
    """Graph position of a vehicle: next node and earliest departure time."""
    return v.loc, max(now, v.position_time)


def candidate_vehicles(
    r: Request, fleet: Sequence[VehicleState], now: float, net
) -> List[int]:
    """Vehicles that could still reach the pickup in time by driving straight
    there — a necessary condition, so filtering by it is exact."""
    out = []
    for v in fleet:
        if now + net.travel_time(v.loc, r.origin) - r.request_time <= r.max_wait:
            out.append(v.id)
    return out


def _pair_shareable(ri: Request, rj: Request, now: float, net, prune: bool):
    """Can one empty two-seater starting at either origin serve both?"""
    calls = explored = 0
    for start in (ri.origin, rj.origin):
        q = PDPQuery(start_node=start, start_time=now, capacity=2,
                     new_requests=[ri, rj])
        res = best_route(q, net, prune=prune, method="exhaustive")
        calls += 1
        explored += res.explored
        if res.feasible:
            return True, calls, explored
    return False, calls, explored


def build_rv(
    pending: Sequence[Request],
    fleet: Sequence[VehicleState],
    onboard: Dict[int, Request],
    now: float,
    net,
    cache: Optional[FeasibleVehicleCache] = None,
    prune: bool = True,
    partition: Optional["RequestPartition"] = None,
    epoch: int = 0,
) -> RVGraph:
    """Pairwise shareability edges and single-request serving costs.

    The partition argument only shapes how work would be fanned out; slot
    results are merged in sorted order, so the graph is identical for every
    partition (and for cache on/off, by the cache-exactness argument above).
    """
    g = RVGraph()
    reqs = sorted(pending, key=lambda r: r.id)
    veh_by_id = {v.id: v for v in fleet}

    for ri, rj in itertools.combinations(reqs, 2):
        ok, calls, explored = _pair_shareable(ri, rj, now, net, prune)
        g.pdp_calls += calls
        g.explored += explored
        if ok:
            g.rr_edges.add((ri.id, rj.id))

    slots = partition.slots if partition is not None else [[r.id for r in reqs]]
    by_id = {r.id: r for r in reqs}
    edge_accum = []
    for slot in slots:
        for rid in sorted(slot):
            r = by_id[rid]
            cand = candidate_vehicles(r, fleet, now, net)
            if cache is not None and rid in cache:
                allowed = cache.get(rid)
                test = [v for v in cand if v in allowed]
            else:
                test = cand
            feasible: Set[int] = set()
            for vid in sorted(test):
                v = veh_by_id[vid]
                node, t0 = vehicle_position(v, now)
                q = PDPQuery(
                    start_node=node, start_time=t0, capacity=v.capacity,
                    new_requests=[r],
                    onboard_requests=[onboard[p] for p in v.onboard],
                )
                res = best_route(q, net, prune=prune, method="exhaustive")
                g.pdp_calls += 1
                g.explored += res.explored
                if res.feasible:
                    feasible.add(vid)
                    edge_accum.append((rid, vid, res.cost, res.route))
            if cache is not None:
                cache.update(rid, feasible, epoch)
    for rid, vid, cost, route in sorted(edge_accum, key=lambda e: (e[0], e[1])):
        g.rv_edges[(rid, vid)] = cost
        g.rv_routes[(rid, vid)] = route
    return g


def build_rtv(
    rv: RVGraph,
    pending: Sequence[Request],
    fleet: Sequence[VehicleState],
    onboard: Dict[int, Request],
    now: float,
    net,
    budget_steps: Optional[int] = None,
    prune: bool = True,
) -> RTVGraph:
    """Grow feasible trips per vehicle from the RV edges, largest first never —
    size by size, so any budget cutoff still leaves a valid (if incomplete)
    graph.  budget_steps caps routing calls per vehicle for trips of size >= 2
    (size-1 trips are free: their routes were already computed for the RV
    edges); None means unlimited.
    """
    g = RTVGraph()
    by_id = {r.id: r for r in pending}

    for v in sorted(fleet, key=lambda v: v.id):
        node, t0 = vehicle_position(v, now)
        onboard_reqs = [onboard[p] for p in v.onboard]
        steps = 0
        complete = True

        singles = sorted(rid for (rid, vid) in rv.rv_edges if vid == v.id)
        level: List[tuple] = []
        mine: Set[tuple] = set()
        for rid in singles:
            trip = (rid,)
            cost = rv.rv_edges[(rid, v.id)]
            route = rv.rv_routes[(rid, v.id)]
            g.trips.add(trip)
            g.tv_edges[(trip, v.id)] = (cost, route)
            mine.add(trip)
            level.append(trip)

        while level:
            nxt: List[tuple] = []
            for trip in level:
                for rid in singles:
                    if rid <= trip[-1]:
                        continue
                    grown = trip + (rid,)
                    if not all(
                        (min(a, rid), max(a, rid)) in rv.rr_edges for a in trip
                    ):
                        continue
                    if not all(
                        tuple(s for s in grown if s != drop) in mine for drop in grown
                    ):
                        continue
                    if budget_steps is not None and steps >= budget_steps:
                        complete = False
                        break
                    steps += 1
                    q = PDPQuery(
                        start_node=node, start_time=t0, capacity=v.capacity,
                        new_requests=[by_id[x] for x in grown],
                        onboard_requests=onboard_reqs,
                    )
                    res = best_route(q, net, prune=prune, method="exhaustive")
                    g.pdp_calls += 1
                    g.explored += res.explored
                    if res.feasible:
                        g.trips.add(grown)
                        g.tv_edges[(grown, v.id)] = (res.cost, res.route)
                        mine.add(grown)
                        nxt.append(grown)
                if not complete:
                    break
            if not complete:
                break
            level = nxt

        g.vehicle_trips[v.id] = sorted(mine)
        g.complete[v.id] = complete
    return g


# ----------------------------------------------------------- partitioning

@dataclass
class RequestPartition:
    slots: List[List[int]]          # request ids per worker slot
    io_cost: int
    k: int


def candidate_map(
    requests: Sequence[Request], fleet: Sequence[VehicleState], now: float, net
) -> Dict[int, frozenset]:
    return {
        r.id: frozenset(candidate_vehicles(r, fleet, now, net)) for r in requests
    }


def partition_io_cost(slots: Sequence[Sequence[int]], vr: Dict[int, frozenset]) -> int:
    """Parallel-dispatch data-movement proxy: per slot, the number of distinct
    vehicles whose state that worker needs."""
    total = 0
    for slot in slots:
        union: set = set()
        for rid in slot:
            union |= vr[rid]
        total += len(union)
    return total


def partition_requests(
    requests: Sequence[Request],
    k: int,
    seed: int,
    vr: Dict[int, frozenset],
    net,
) -> RequestPartition:
    """Group requests into k slots by clustering their origin coordinates."""
    reqs = sorted(requests, key=lambda r: r.id)
    if not reqs:
        return RequestPartition([[] for _ in range(max(1, k))], 0, max(1, k))
    pts = np.array([net.coords[r.origin] for r in reqs])
    labels, _ = kmeans(pts, min(k, len(reqs)), seed)
    slots: List[List[int]] = [[] for _ in range(max(1, min(k, len(reqs))))]
    for r, lab in zip(reqs, labels):
        slots[int(lab)].append(r.id)
    return RequestPartition(slots, partition_io_cost(slots, vr), len(slots))


def random_partition(
    requests: Sequence[Request], k: int, seed: int, vr: Dict[int, frozenset]
) -> RequestPartition:
    """Uniform random slot per request; the comparison baseline."""
    reqs = sorted(requests, key=lambda r: r.id)
    rng = np.random.default_rng(seed)
    slots: List[List[int]] = [[] for _ in range(max(1, k))]
    for r in reqs:
        slots[int(rng.integers(0, max(1, k)))].append(r.id)
    return RequestPartition(slots, partition_io_cost(slots, vr), max(1, k))


def optimal_partition(
    requests: Sequence[Request], k: int, vr: Dict[int, frozenset]
) -> int:
    """Exact minimum io_cost over every assignment of requests to k slots.

    Exponential (k^n); only sensible for n <= ~10.  Returns the optimal cost
    (the argmin itself is not unique under slot relabeling).
    """
    reqs = sorted(requests, key=lambda r: r.id)
    n = len(reqs)
    if n == 0:
        return 0
    if n > 12:
        raise InternalError("brute-force partition limited to 12 requests")
    vids = sorted({v for r in reqs for v in vr[r.id]})
    vid_bit = {v: 1 << i for i, v in enumerate(vids)}
    masks = [sum(vid_bit[v] for v in vr[r.id]) for r in reqs]
    best = None
    for assign in itertools.product(range(k), repeat=n):
        unions = [0] * k
        for i, slot in enumerate(assign):
            unions[slot] |= masks[i]
        cost = sum(bin(u).count("1") for u in unions)
        if best is None or cost < best:
            best = cost
    return best

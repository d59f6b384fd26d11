"""Single-vehicle pickup-and-delivery routing with hard time windows.

Given one vehicle (position, free seats, passengers already on board) and a
set of additional requests, find the cheapest stop order that picks up every
new request and drops everyone off within their deadlines.  Cost is the sum
of dropoff delays versus each rider's ideal (immediate, direct) trip.

Two strategies:

- exhaustive search over all valid stop interleavings (exact; optionally with
  reachability pruning that cannot change the answer), and
- a cheapest-insertion heuristic for high-capacity vehicles where the
  exhaustive tree is too large.

The exhaustive search runs in a compiled kernel when available, falling back
to the pure-Python twin.  Set RIDEPOOL_PURE=1 to force the fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import RouteError
from .fleet import Request, Stop

if os.environ.get("RIDEPOOL_PURE") == "1":
    from . import _pdp_py as _kernel
else:
    try:
        from . import _pdpcore as _kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import _pdp_py as _kernel


def kernel_backend() -> str:
    """'compiled' or 'python', depending on which search kernel is active."""
    return _kernel.BACKEND


#: Exhaustive search is exact but factorial in stop count; above this vehicle
#: capacity the auto strategy switches to cheapest insertion.
EXHAUSTIVE_CAPACITY_CUTOFF = 4

_MAX_SLOTS = 62  # bitmask width guard


@dataclass
class PDPQuery:
    start_node: int
    start_time: float
    capacity: int
    new_requests: list          # list[Request] needing pickup + dropoff
    onboard_requests: list = field(default_factory=list)   # dropoff only
    base_route: Optional[list] = None  # existing Stop order (insertion seed)


@dataclass
class PDPResult:
    feasible: bool
    cost: float
    route: list                 # list[Stop]
    stop_times: list            # arrival/service time per stop
    explored: int               # candidate extensions evaluated by the search


def _encode(query: PDPQuery):
    slots = sorted(
        [(r, True) for r in query.new_requests]
        + [(r, False) for r in query.onboard_requests],
        key=lambda pair: pair[0].id,
    )
    n = len(slots)
    if n > _MAX_SLOTS:
        raise RouteError(f"too many requests in one query ({n} > {_MAX_SLOTS})")
    has_pickup = np.zeros(n, dtype=np.uint8)
    origins = np.zeros(n, dtype=np.int64)
    dests = np.zeros(n, dtype=np.int64)
    ready = np.zeros(n, dtype=np.float64)
    wait_deadline = np.full(n, math.inf, dtype=np.float64)
    drop_deadline = np.zeros(n, dtype=np.float64)
    t_star = np.zeros(n, dtype=np.float64)
    for j, (r, needs_pickup) in enumerate(slots):
        dests[j] = r.destination
        drop_deadline[j] = r.latest_dropoff
        t_star[j] = r.request_time + r.direct_time
        if needs_pickup:
            has_pickup[j] = 1
            origins[j] = r.origin
            ready[j] = r.request_time
            wait_deadline[j] = r.latest_pickup
        else:
            origins[j] = r.destination
    return slots, has_pickup, origins, dests, ready, wait_deadline, drop_deadline, t_star


def _decode_seq(seq, slots) -> list:
    route = []
    for code in seq:
        r, _ = slots[code // 2]
        if code % 2 == 0:
            route.append(Stop(r.id, r.origin, True))
        else:
            route.append(Stop(r.id, r.destination, False))
    return route


def best_route_exhaustive(query: PDPQuery, net, prune: bool = True) -> PDPResult:
    """Exact minimum-delay route; prune toggles reachability-based cutoffs.

    Pruned and unpruned searches return identical feasibility, cost, and
    route; only the explored count differs.  Ties on cost resolve to the
    route whose stop sequence is lexicographically smallest under
    (pickup-before-dropoff, ascending request id) ordering.
    """
    enc = _encode(query)
    slots = enc[0]
    tt = net.matrix()
    feasible, cost, seq, explored = _kernel.search_best_route(
        tt, query.start_node, query.start_time, query.capacity,
        *enc[1:], 1 if prune else 0,
    )
    if not feasible:
        return PDPResult(False, math.inf, [], [], explored)
    route = _decode_seq(seq, slots)
    ok, cost2, times = check_route(query, route, net)
    if not ok or abs(cost2 - cost) > 1e-9:
        raise RouteError("search kernel returned an inconsistent route")
    return PDPResult(True, cost, route, times, explored)


def check_route(query: PDPQuery, route: Sequence, net) -> tuple:
    """Simulate a stop sequence; (feasible, cost, per-stop service times).

    Structural defects (unknown request ids, missing or duplicated stops,
    dropoff before pickup) raise RouteError; timing or capacity violations
    just report infeasible.
    """
    by_id = {r.id: r for r in query.new_requests}
    onboard_ids = {r.id for r in query.onboard_requests}
    for r in query.onboard_requests:
        by_id[r.id] = r

    picked = set(onboard_ids)
    dropped = set()
    for s in route:
        if s.request_id not in by_id:
            raise RouteError(f"route references unknown request {s.request_id}")
        if s.is_pickup:
            if s.request_id in picked:
                raise RouteError(f"request {s.request_id} picked up twice")
            picked.add(s.request_id)
        else:
            if s.request_id not in picked:
                raise RouteError(f"request {s.request_id} dropped before pickup")
            if s.request_id in dropped:
                raise RouteError(f"request {s.request_id} dropped twice")
            dropped.add(s.request_id)
    if dropped != set(by_id):
        missing = sorted(set(by_id) - dropped)
        raise RouteError(f"route never drops off requests {missing}")

    t = query.start_time
    node = query.start_node
    occ = len(onboard_ids)
    cost = 0.0
    times = []
    for s in route:
        t = t + net.travel_time(node, s.node)
        node = s.node
        r = by_id[s.request_id]
        if s.is_pickup:
            if t < r.request_time:
                t = r.request_time
            if t > r.latest_pickup:
                return False, math.inf, times
            occ += 1
            if occ > query.capacity:
                return False, math.inf, times
        else:
            if t > r.latest_dropoff:
                return False, math.inf, times
            cost = cost + (t - (r.request_time + r.direct_time))
            occ -= 1
        times.append(t)
    return True, cost, times


def best_route_insertion(query: PDPQuery, net) -> PDPResult:
    """Cheapest-insertion heuristic: feasible but not necessarily optimal.

    Starts from the onboard dropoffs (in base_route order when given) and
    inserts new requests one at a time — ascending request time, then id —
    each at the cost-minimal feasible pickup/dropoff position pair, earliest
    positions winning ties.
    """
    if query.base_route is not None:
        base = [s for s in query.base_route
                if not s.is_pickup and any(r.id == s.request_id for r in query.onboard_requests)]
    else:
        base = [Stop(r.id, r.destination, False)
                for r in sorted(query.onboard_requests, key=lambda r: r.id)]
    covered = {s.request_id for s in base}
    for r in query.onboard_requests:
        if r.id not in covered:
            base.append(Stop(r.id, r.destination, False))

    route = base
    evaluated = 0
    order = sorted(query.new_requests, key=lambda r: (r.request_time, r.id))
    for r in order:
        pick = Stop(r.id, r.origin, True)
        drop = Stop(r.id, r.destination, False)
        best = None  # (cost, p, q, candidate_route)
        for p in range(len(route) + 1):
            for q in range(p, len(route) + 1):
                cand = route[:p] + [pick] + route[p:q] + [drop] + route[q:]
                evaluated += 1
                ok, cost, _ = _try_partial(query, cand, net)
                if ok and (best is None or cost < best[0]):
                    best = (cost, p, q, cand)
        if best is None:
            return PDPResult(False, math.inf, [], [], evaluated)
        route = best[3]
    ok, cost, times = check_route(query, route, net)
    if not ok:
        return PDPResult(False, math.inf, [], [], evaluated)
    return PDPResult(True, cost, route, times, evaluated)


def _try_partial(query: PDPQuery, route: Sequence, net) -> tuple:
    """check_route over only the requests that appear in this partial order."""
    present = {s.request_id for s in route}
    sub = PDPQuery(
        query.start_node,
        query.start_time,
        query.capacity,
        [r for r in query.new_requests if r.id in present],
        query.onboard_requests,
    )
    return check_route(sub, route, net)


def best_route(query: PDPQuery, net, prune: bool = True, method: str = "auto") -> PDPResult:
    """Route the query with the strategy appropriate to the vehicle size."""
    if method == "auto":
        method = (
            "exhaustive" if query.capacity <= EXHAUSTIVE_CAPACITY_CUTOFF else "insertion"
        )
    if method == "exhaustive":
        return best_route_exhaustive(query, net, prune=prune)
    if method == "insertion":
        return best_route_insertion(query, net)
    raise RouteError(f"unknown routing method {method!r}")

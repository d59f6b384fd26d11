"""Epoch assignment: pick at most one trip per vehicle covering each pending
request at most once, minimizing served delay plus an ignore penalty per
unserved request; then commit the winning routes to the fleet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import InternalError
from .fleet import ASSIGNED, CostParams, PENDING, Request, VehicleState
from .pdp import PDPQuery, check_route
from .rvgraph import RTVGraph, vehicle_position
from .solver import IPInstance, SolveResult, solve_ip


@dataclass
class AssignmentSolution:
    chosen: List[Tuple[tuple, int]]         # (trip, vehicle id), sorted
    unassigned: Set[int]                    # request ids left unserved
    objective: float
    status: str = "optimal"
    nodes_explored: int = 0


def _sorted_edges(rtv: RTVGraph) -> List[Tuple[tuple, int]]:
    return sorted(rtv.tv_edges.keys())


def build_assignment_ip(
    rtv: RTVGraph, pending_ids: Sequence[int], params: CostParams
) -> Tuple[IPInstance, List[Tuple[tuple, int]], List[int]]:
    """Binary program over trip-vehicle edges plus one ignore flag per request.

    Rows: each vehicle serves at most one trip; each pending request is either
    inside exactly one chosen trip or flagged ignored.  Returns the instance
    together with the variable layout (edge list, then request-id list).
    """
    edges = _sorted_edges(rtv)
    rids = sorted(pending_ids)
    n = len(edges) + len(rids)
    c = np.zeros(n)
    for j, key in enumerate(edges):
        c[j] = rtv.tv_edges[key][0]
    c[len(edges):] = params.unserved_penalty

    rows = []
    vids = sorted({vid for _, vid in edges})
    for vid in vids:
        coeffs = np.zeros(n)
        for j, (trip, v) in enumerate(edges):
            if v == vid:
                coeffs[j] = 1.0
        rows.append((coeffs, "<=", 1.0))
    for i, rid in enumerate(rids):
        coeffs = np.zeros(n)
        for j, (trip, v) in enumerate(edges):
            if rid in trip:
                coeffs[j] = 1.0
        coeffs[len(edges) + i] = 1.0
        rows.append((coeffs, "=", 1.0))

    names = [f"x_{'_'.join(map(str, t))}__v{v}" for t, v in edges]
    names += [f"chi_{rid}" for rid in rids]
    inst = IPInstance(c, rows, np.zeros(n), np.ones(n), np.ones(n, dtype=bool),
                      names=names)
    return inst, edges, rids


def greedy_warm_start(
    rtv: RTVGraph, pending_ids: Sequence[int], params: CostParams
) -> AssignmentSolution:
    """Feasible assignment by scanning edges biggest-trip-first, cheapest-first."""
    order = sorted(
        rtv.tv_edges.items(),
        key=lambda kv: (-len(kv[0][0]), kv[1][0], kv[0][0], kv[0][1]),
    )
    used_vehicles: Set[int] = set()
    covered: Set[int] = set()
    chosen: List[Tuple[tuple, int]] = []
    cost = 0.0
    for (trip, vid), (edge_cost, _) in order:
        if vid in used_vehicles or any(r in covered for r in trip):
            continue
        chosen.append((trip, vid))
        used_vehicles.add(vid)
        covered.update(trip)
        cost += edge_cost
    unassigned = {rid for rid in pending_ids if rid not in covered}
    cost += params.unserved_penalty * len(unassigned)
    return AssignmentSolution(sorted(chosen), unassigned, cost)


def _solution_vector(
    sol: AssignmentSolution, edges: List[Tuple[tuple, int]], rids: List[int]
) -> np.ndarray:
    x = np.zeros(len(edges) + len(rids))
    chosen = set(sol.chosen)
    for j, key in enumerate(edges):
        if key in chosen:
            x[j] = 1.0
    for i, rid in enumerate(rids):
        if rid in sol.unassigned:
            x[len(edges) + i] = 1.0
    return x


def solve_assignment(
    rtv: RTVGraph,
    pending_ids: Sequence[int],
    params: CostParams,
    budget: Optional[int] = None,
) -> AssignmentSolution:
    """Warm-started exact assignment; anytime under a node budget."""
    inst, edges, rids = build_assignment_ip(rtv, pending_ids, params)
    warm = greedy_warm_start(rtv, pending_ids, params)
    res = solve_ip(inst, warm_start=_solution_vector(warm, edges, rids),
                   budget=budget)
    if res.values is None:
        raise InternalError("assignment solve produced no solution")
    chosen = [edges[j] for j in range(len(edges)) if res.values[j] > 0.5]
    unassigned = {
        rids[i] for i in range(len(rids)) if res.values[len(edges) + i] > 0.5
    }
    return AssignmentSolution(sorted(chosen), unassigned, res.objective,
                              res.status, res.nodes_explored)


def commit(
    solution: AssignmentSolution,
    rtv: RTVGraph,
    fleet: Sequence[VehicleState],
    pool: Dict[int, Request],
    onboard: Dict[int, Request],
    now: float,
    net,
) -> None:
    """Install the chosen routes; everyone not re-chosen reverts to pending.

    Onboard passengers are untouchable: an unchosen vehicle keeps exactly
    the dropoff stops of its current passengers (dropping stops from a
    feasible route keeps it feasible), and every chosen route is re-validated
    before installation.
    """
    chosen_by_vehicle = {vid: trip for trip, vid in solution.chosen}
    seen = set()
    for trip, vid in solution.chosen:
        for rid in trip:
            if rid in seen:
                raise InternalError(f"request {rid} covered twice")
            seen.add(rid)

    for rid, r in sorted(pool.items()):
        assigned_to = None
        for trip, vid in solution.chosen:
            if rid in trip:
                assigned_to = vid
                break
        if assigned_to is not None:
            r.mark_assigned(assigned_to)
        elif r.state == ASSIGNED:
            r.revert_to_pending()

    for v in sorted(fleet, key=lambda v: v.id):
        node, t0 = vehicle_position(v, now)
        onboard_reqs = [onboard[p] for p in v.onboard]
        if v.id in chosen_by_vehicle:
            trip = chosen_by_vehicle[v.id]
            cost, route = rtv.tv_edges[(trip, v.id)]
            q = PDPQuery(start_node=node, start_time=t0, capacity=v.capacity,
                         new_requests=[pool[rid] for rid in trip],
                         onboard_requests=onboard_reqs)
            ok, cost2, _ = check_route(q, route, net)
            if not ok or abs(cost2 - cost) > 1e-6:
                raise InternalError(
                    f"vehicle {v.id}: committed route failed re-validation"
                )
            v.route = list(route)
            v.rebalance_target = None
        else:
            kept = [s for s in v.route
                    if not s.is_pickup and s.request_id in set(v.onboard)]
            if kept != v.route:
                v.route = kept
            if v.route:
                q = PDPQuery(start_node=node, start_time=t0, capacity=v.capacity,
                             new_requests=[], onboard_requests=onboard_reqs)
                ok, _, _ = check_route(q, v.route, net)
                if not ok:
                    raise InternalError(
                        f"vehicle {v.id}: residual route failed re-validation"
                    )
        for rid in v.onboard:
            drops = [s for s in v.route if s.request_id == rid and not s.is_pickup]
            if len(drops) != 1:
                raise InternalError(
                    f"vehicle {v.id}: passenger {rid} lost from committed route"
                )

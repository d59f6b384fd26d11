"""Assignment ILP construction, greedy seed, and route commitment."""

import itertools
import math

import numpy as np
import pytest

from ridepool.assignment import (
    build_assignment_ip,
    commit,
    greedy_warm_start,
    solve_assignment,
)
from ridepool.errors import InternalError
from ridepool.fleet import ASSIGNED, PENDING, CostParams, Request, Stop, VehicleState
from ridepool.rvgraph import RTVGraph, build_rtv, build_rv
from ridepool.solver import solve_ip

from conftest import random_request
from test_rv_rtv import _scene


def _synth_rtv(rng, n_vehicles, n_requests, n_edges):
    """Random trip-vehicle graph; routes are irrelevant to the solve."""
    rtv = RTVGraph()
    for _ in range(n_edges):
        size = int(rng.integers(1, min(3, n_requests) + 1))
        trip = tuple(sorted(rng.choice(n_requests, size=size, replace=False).tolist()))
        vid = int(rng.integers(0, n_vehicles))
        cost = float(rng.integers(1, 500))
        if (trip, vid) not in rtv.tv_edges:
            rtv.trips.add(trip)
            rtv.tv_edges[(trip, vid)] = (cost, [])
    return rtv


def _enumerate_best(rtv, pending_ids, penalty):
    """Try every combination of at most one trip per vehicle."""
    vids = sorted({vid for _, vid in rtv.tv_edges})
    options = {
        vid: [None] + sorted(t for (t, v) in rtv.tv_edges if v == vid)
        for vid in vids
    }
    best = math.inf
    for combo in itertools.product(*(options[v] for v in vids)):
        covered = set()
        ok = True
        cost = 0.0
        for vid, trip in zip(vids, combo):
            if trip is None:
                continue
            if covered & set(trip):
                ok = False
                break
            covered |= set(trip)
            cost += rtv.tv_edges[(trip, vid)][0]
        if not ok:
            continue
        cost += penalty * len([r for r in pending_ids if r not in covered])
        best = min(best, cost)
    return best


def test_empty_graph_pays_full_penalty():
    params = CostParams(unserved_penalty=9000.0)
    sol = solve_assignment(RTVGraph(), [1, 2, 3], params)
    assert sol.chosen == []
    assert sol.unassigned == {1, 2, 3}
    assert sol.objective == pytest.approx(27000.0)


def test_single_edge_dominates_penalty():
    rtv = RTVGraph()
    rtv.trips.add((7,))
    rtv.tv_edges[((7,), 0)] = (40.0, [])
    sol = solve_assignment(rtv, [7], CostParams(unserved_penalty=10000.0))
    assert sol.chosen == [((7,), 0)]
    assert sol.unassigned == set()
    assert sol.objective == pytest.approx(40.0)


@pytest.mark.parametrize("seed", range(6))
def test_solve_matches_enumeration(seed):
    rng = np.random.default_rng(900 + seed)
    params = CostParams(unserved_penalty=9000.0)
    for _ in range(10):
        n_veh = int(rng.integers(1, 5))
        n_req = int(rng.integers(1, 7))
        rtv = _synth_rtv(rng, n_veh, n_req, int(rng.integers(0, 9)))
        pending = list(range(n_req))
        want = _enumerate_best(rtv, pending, params.unserved_penalty)
        sol = solve_assignment(rtv, pending, params)
        assert sol.objective == pytest.approx(want, abs=1e-9)
        used_v = [vid for _, vid in sol.chosen]
        assert len(used_v) == len(set(used_v))
        covered = [r for t, _ in sol.chosen for r in t]
        assert len(covered) == len(set(covered))
        assert set(covered) | sol.unassigned == set(pending)
        assert not set(covered) & sol.unassigned


def test_warm_start_is_feasible_and_ordered():
    rtv = RTVGraph()
    rtv.tv_edges[((1, 2), 0)] = (100.0, [])   # size-2, expensive
    rtv.tv_edges[((1,), 0)] = (10.0, [])      # size-1, cheap, same vehicle
    rtv.trips.update({(1, 2), (1,)})
    ws = greedy_warm_start(rtv, [1, 2], CostParams(unserved_penalty=9000.0))
    assert ws.chosen == [((1, 2), 0)]  # bigger trips always outrank cheaper ones
    assert ws.unassigned == set()

    empty = greedy_warm_start(RTVGraph(), [5], CostParams(unserved_penalty=1.0))
    assert empty.chosen == [] and empty.unassigned == {5}


def test_solver_never_worse_than_greedy():
    rng = np.random.default_rng(17)
    params = CostParams(unserved_penalty=5000.0)
    for _ in range(25):
        rtv = _synth_rtv(rng, 4, 6, 10)
        pending = list(range(6))
        ws = greedy_warm_start(rtv, pending, params)
        sol = solve_assignment(rtv, pending, params)
        assert sol.objective <= ws.objective + 1e-9


def test_warm_start_vector_accepted_by_solver():
    rng = np.random.default_rng(23)
    rtv = _synth_rtv(rng, 3, 5, 8)
    params = CostParams(unserved_penalty=7000.0)
    inst, edges, rids = build_assignment_ip(rtv, list(range(5)), params)
    from ridepool.assignment import _solution_vector
    ws = greedy_warm_start(rtv, list(range(5)), params)
    vec = _solution_vector(ws, edges, rids)
    res = solve_ip(inst, warm_start=vec, budget=0)
    assert res.status == "incumbent_budget_exhausted"
    assert res.objective == pytest.approx(ws.objective)


# ------------------------------------------------------------------- commit

def _committed_scene(grid5, seed=11):
    rng = np.random.default_rng(seed)
    pending, fleet, onboard = _scene(grid5, rng, 5, 4, onboard_per=1)
    for v in fleet:  # routes must already carry the onboard dropoffs
        v.route = [Stop(rid, onboard[rid].destination, False) for rid in v.onboard]
    pool = {r.id: r for r in pending}
    rv = build_rv(pending, fleet, onboard, 0.0, grid5)
    rtv = build_rtv(rv, pending, fleet, onboard, 0.0, grid5)
    params = CostParams.for_windows(300.0, 600.0)
    sol = solve_assignment(rtv, list(pool), params)
    return pending, fleet, onboard, pool, rtv, sol


def test_commit_installs_routes_and_states(grid5):
    pending, fleet, onboard, pool, rtv, sol = _committed_scene(grid5)
    # pretend one chosen vehicle was rebalancing: assignment must override
    if sol.chosen:
        _, vid = sol.chosen[0]
        next(v for v in fleet if v.id == vid).rebalance_target = 3
    commit(sol, rtv, fleet, pool, onboard, 0.0, grid5)
    for trip, vid in sol.chosen:
        v = next(x for x in fleet if x.id == vid)
        assert v.rebalance_target is None
        route_rids = {s.request_id for s in v.route}
        assert set(trip) <= route_rids
        for rid in trip:
            assert pool[rid].state == ASSIGNED
            assert pool[rid].assigned_vehicle == vid
    for rid in sol.unassigned:
        assert pool[rid].state == PENDING


def test_commit_reverts_dropped_assignments(grid5):
    pending, fleet, onboard, pool, rtv, sol = _committed_scene(grid5)
    commit(sol, rtv, fleet, pool, onboard, 0.0, grid5)
    # next epoch: empty solution drops everything not yet picked up
    from ridepool.assignment import AssignmentSolution
    empty = AssignmentSolution([], set(pool), 0.0)
    commit(empty, rtv, fleet, pool, onboard, 0.0, grid5)
    for r in pool.values():
        assert r.state == PENDING
    for v in fleet:
        assert all(not s.is_pickup for s in v.route)
        assert {s.request_id for s in v.route} == set(v.onboard)


def test_commit_preserves_onboard_everywhere(grid5):
    pending, fleet, onboard, pool, rtv, sol = _committed_scene(grid5, seed=29)
    commit(sol, rtv, fleet, pool, onboard, 0.0, grid5)
    for v in fleet:
        for rid in v.onboard:
            drops = [s for s in v.route if s.request_id == rid and not s.is_pickup]
            assert len(drops) == 1


def test_commit_rejects_corrupted_route(grid5):
    pending, fleet, onboard, pool, rtv, sol = _committed_scene(grid5)
    if not sol.chosen:
        pytest.skip("scene produced no assignment")
    trip, vid = sol.chosen[0]
    cost, route = rtv.tv_edges[(trip, vid)]
    rtv.tv_edges[(trip, vid)] = (cost + 999.0, route)  # cost no longer matches
    with pytest.raises(InternalError, match="re-validation"):
        commit(sol, rtv, fleet, pool, onboard, 0.0, grid5)

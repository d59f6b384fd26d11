"""Randomized brute-force cross-checks of every solver in the package.

Each check pits a production code path against an independent oracle:
stop-order enumeration for routing, per-vehicle choice enumeration for the
assignment program, permutation search and the SciPy Hungarian solver for
matching, exact summation for the demand marginals, and direct recomputation
for the feasibility cache.  They are small enough to run routinely
(``ridepool oracle``) and loud when anything drifts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .assignment import solve_assignment
from .fleet import CostParams, Request, VehicleState
from .pdp import PDPQuery, best_route
from .rebalance import marginal_probabilities
from .rvgraph import RTVGraph, optimal_partition, partition_requests, candidate_map
from .scenario import DemandSpec, generate_requests, grid_network
from .sim import SimConfig, Simulation
from .solver import MatchingInstance, min_cost_matching
from . import pdp as _pdp


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: {self.detail}"


def _random_query(net, rng, n_new, n_onboard, capacity=4):
    reqs = []
    rid = 0
    for _ in range(n_new + n_onboard):
        o = int(rng.integers(0, net.n_nodes))
        d = int(rng.integers(0, net.n_nodes))
        while d == o:
            d = int(rng.integers(0, net.n_nodes))
        reqs.append(Request(
            id=rid, origin=o, destination=d, request_time=float(rng.integers(0, 60)),
            direct_time=net.travel_time(o, d), max_wait=300.0, max_delay=600.0))
        rid += 1
    onboard = reqs[n_new:]
    for r in onboard:
        r.mark_assigned(0)
        r.mark_onboard(r.request_time)
    return PDPQuery(
        start_node=int(rng.integers(0, net.n_nodes)),
        start_time=float(rng.integers(0, 90)),
        capacity=capacity,
        new_requests=reqs[:n_new],
        onboard_requests=onboard,
    )


def _enumerate_best(query, net):
    """Try every pickup-before-dropoff interleaving with its own clock."""
    slots = sorted(
        list(query.new_requests) + list(query.onboard_requests),
        key=lambda r: r.id)
    onboard_ids = {r.id for r in query.onboard_requests}
    stops = []
    for k, r in enumerate(slots):
        if r.id not in onboard_ids:
            stops.append((k, 0))
        stops.append((k, 1))
    best = (False, math.inf)
    for perm in itertools.permutations(stops):
        seen = set()
        occ = len(onboard_ids)
        ok = True
        for k, kind in perm:
            if kind == 0:
                occ += 1
                if occ > query.capacity:
                    ok = False
                    break
                seen.add(k)
            else:
                if slots[k].id not in onboard_ids and k not in seen:
                    ok = False
                    break
                occ -= 1
        if not ok:
            continue
        t = query.start_time
        node = query.start_node
        cost = 0.0
        for k, kind in perm:
            r = slots[k]
            if kind == 0:
                t = max(t + net.travel_time(node, r.origin), r.request_time)
                node = r.origin
                if t > r.latest_pickup:
                    ok = False
                    break
            else:
                t = t + net.travel_time(node, r.destination)
                node = r.destination
                if t > r.latest_dropoff:
                    ok = False
                    break
                cost += t - (r.request_time + r.direct_time)
        if ok and cost < best[1]:
            best = (True, cost)
    return best


def check_route_enumeration(seed: int = 0, trials: int = 50) -> CheckResult:
    net = grid_network(5, 5)
    rng = np.random.default_rng(seed)
    for i in range(trials):
        q = _random_query(net, rng, int(rng.integers(1, 4)), int(rng.integers(0, 2)))
        res = best_route(q, net, prune=True, method="exhaustive")
        feas, cost = _enumerate_best(q, net)
        if res.feasible != feas:
            return CheckResult("route-enumeration", False,
                               f"trial {i}: feasibility mismatch")
        if feas and res.cost != cost:
            return CheckResult("route-enumeration", False,
                               f"trial {i}: cost {res.cost} != {cost}")
    return CheckResult("route-enumeration", True,
                       f"{trials} queries match stop-order enumeration exactly")


def check_prune_equivalence(seed: int = 1, trials: int = 120) -> CheckResult:
    net = grid_network(6, 6)
    rng = np.random.default_rng(seed)
    explored = [0, 0]
    for i in range(trials):
        q = _random_query(net, rng, int(rng.integers(1, 5)), int(rng.integers(0, 3)))
        a = best_route(q, net, prune=False, method="exhaustive")
        b = best_route(q, net, prune=True, method="exhaustive")
        if (a.feasible, a.cost, a.route) != (b.feasible, b.cost, b.route):
            return CheckResult("prune-equivalence", False, f"trial {i}: outputs differ")
        explored[0] += a.explored
        explored[1] += b.explored
    ratio = explored[1] / explored[0] if explored[0] else 1.0
    return CheckResult("prune-equivalence", True,
                       f"{trials} queries identical; pruned work ratio {ratio:.3f}")


def check_kernel_twins(seed: int = 2, trials: int = 60) -> CheckResult:
    if _pdp.kernel_backend() == "python":
        return CheckResult("kernel-twins", True,
                           "compiled kernel not built; pure backend in use")
    from . import _pdp_py
    net = grid_network(5, 5)
    tt = net.matrix()
    rng = np.random.default_rng(seed)
    for i in range(trials):
        q = _random_query(net, rng, int(rng.integers(1, 4)), int(rng.integers(0, 3)))
        enc = _pdp._encode(q)
        args = (tt, q.start_node, q.start_time, q.capacity) + tuple(enc[1:])
        for prune in (0, 1):
            a = _pdp._kernel.search_best_route(*args, prune)
            b = _pdp_py.search_best_route(*args, prune)
            if (a[0], a[1], list(a[2]), a[3]) != (b[0], b[1], list(b[2]), b[3]):
                return CheckResult("kernel-twins", False,
                                   f"trial {i}: backends disagree (prune={prune})")
    return CheckResult("kernel-twins", True,
                       f"{trials} queries bit-identical across backends")


def check_assignment_enumeration(seed: int = 3, trials: int = 40) -> CheckResult:
    rng = np.random.default_rng(seed)
    params = CostParams(unserved_penalty=9000.0)
    for i in range(trials):
        n_veh = int(rng.integers(1, 4))
        n_req = int(rng.integers(1, 6))
        rtv = RTVGraph()
        for _ in range(int(rng.integers(0, 8))):
            size = int(rng.integers(1, min(3, n_req) + 1))
            trip = tuple(sorted(rng.choice(n_req, size=size, replace=False).tolist()))
            vid = int(rng.integers(0, n_veh))
            if (trip, vid) not in rtv.tv_edges:
                rtv.trips.add(trip)
                rtv.tv_edges[(trip, vid)] = (float(rng.integers(1, 300)), [])
        vids = sorted({v for _, v in rtv.tv_edges})
        options = {v: [None] + sorted(t for (t, w) in rtv.tv_edges if w == v)
                   for v in vids}
        best = math.inf
        for combo in itertools.product(*(options[v] for v in vids)) \
                if vids else [()]:
            covered: set = set()
            bad = False
            cost = 0.0
            for v, trip in zip(vids, combo):
                if trip is None:
                    continue
                if covered & set(trip):
                    bad = True
                    break
                covered |= set(trip)
                cost += rtv.tv_edges[(trip, v)][0]
            if bad:
                continue
            cost += params.unserved_penalty * (n_req - len(covered))
            best = min(best, cost)
        sol = solve_assignment(rtv, list(range(n_req)), params)
        if abs(sol.objective - best) > 1e-9:
            return CheckResult("assignment-enumeration", False,
                               f"trial {i}: {sol.objective} != {best}")
    return CheckResult("assignment-enumeration", True,
                       f"{trials} instances match choice enumeration")


def check_matching_oracles(seed: int = 4, trials: int = 60) -> CheckResult:
    from scipy.optimize import linear_sum_assignment

    rng = np.random.default_rng(seed)
    for i in range(trials):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        C = rng.integers(0, 50, size=(n, m)).astype(float)
        k = min(n, m)
        res = min_cost_matching(MatchingInstance(C, k))
        # permutation brute force at the same cardinality
        best = math.inf
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                best = min(best, sum(C[r, c] for r, c in zip(rows, cols)))
        if abs(res.objective - best) > 1e-9:
            return CheckResult("matching-oracles", False,
                               f"trial {i}: {res.objective} != brute {best}")
        if n == m:
            ri, ci = linear_sum_assignment(C)
            hung = float(C[ri, ci].sum())
            if abs(res.objective - hung) > 1e-9:
                return CheckResult("matching-oracles", False,
                                   f"trial {i}: {res.objective} != hungarian {hung}")
    return CheckResult("matching-oracles", True,
                       f"{trials} instances match brute force and Hungarian")


def check_marginals(seed: int = 5, trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    for i in range(trials):
        n = int(rng.integers(1, 14))
        w = rng.random(n + 1)
        P = w / math.fsum(w.tolist())
        P = P / math.fsum(P.tolist())
        p = marginal_probabilities(P)
        for j in range(1, n + 1):
            if abs(p[j - 1] - math.fsum(P[j:].tolist())) > 1e-12:
                return CheckResult("marginals", False, f"trial {i}: suffix sum off")
        mean = math.fsum((np.arange(n + 1) * P).tolist())
        if abs(math.fsum(p.tolist()) - mean) > 1e-12:
            return CheckResult("marginals", False, f"trial {i}: mean identity off")
        if any(p[j] < p[j + 1] - 1e-15 for j in range(n - 1)):
            return CheckResult("marginals", False, f"trial {i}: not monotone")
    return CheckResult("marginals", True,
                       f"{trials} distributions pass suffix/mean/monotone checks")


def check_partitioning(seed: int = 6, trials: int = 10) -> CheckResult:
    net = grid_network(2, 12)
    rng = np.random.default_rng(seed)
    for i in range(trials):
        reqs = []
        fleet = []
        for j in range(8):
            hub = 0 if j < 4 else 11
            o = hub + 12 * int(rng.integers(0, 2))
            d = int(rng.integers(0, 24))
            while d == o:
                d = int(rng.integers(0, 24))
            reqs.append(Request(id=j, origin=o, destination=d,
                                request_time=0.0, direct_time=net.travel_time(o, d),
                                max_wait=300.0, max_delay=600.0))
        for j in range(8):
            fleet.append(VehicleState(id=j, capacity=4,
                                      loc=(0 if j < 4 else 11) + 12 * (j % 2)))
        vr = candidate_map(reqs, fleet, 0.0, net)
        got = partition_requests(reqs, 2, seed=int(rng.integers(0, 1 << 30)),
                                 vr=vr, net=net)
        opt = optimal_partition(reqs, 2, vr)
        if got.io_cost != opt:
            return CheckResult("partitioning", False,
                               f"trial {i}: kmeans {got.io_cost} != optimal {opt}")
    return CheckResult("partitioning", True,
                       f"{trials} two-hub instances split optimally")


def check_cache_soundness(seed: int = 7, epochs: int = 30) -> CheckResult:
    net = grid_network(8, 8)
    cfg = SimConfig(n_vehicles=8, capacity=4, seed=seed, variant="speedup")
    sim = Simulation(cfg, net)
    spec = DemandSpec(rows=8, cols=8, rate_per_epoch=2.0, n_epochs=epochs)
    demand = generate_requests(net, spec, seed)
    by_epoch: dict = {}
    from .sim import epoch_of
    for r in demand:
        by_epoch.setdefault(epoch_of(r.request_time, cfg.epoch_s), []).append(r)
    rng = np.random.default_rng(seed + 1)
    audited = 0
    for e in range(1, epochs + 1):
        sim.step(by_epoch.get(e, []))
        pairs = sim.cache.excluded_pairs(sorted(sim.pool),
                                         [v.id for v in sim.fleet])
        if not pairs:
            continue
        pick = rng.choice(len(pairs), size=min(20, len(pairs)), replace=False)
        veh = {v.id: v for v in sim.fleet}
        for idx in sorted(pick.tolist()):
            rid, vid = pairs[idx]
            v = veh[vid]
            from .rvgraph import vehicle_position
            node, t0 = vehicle_position(v, sim.now)
            q = PDPQuery(start_node=node, start_time=t0, capacity=v.capacity,
                         new_requests=[sim.pool[rid]],
                         onboard_requests=[sim.onboard[p] for p in v.onboard])
            if best_route(q, net, prune=True, method="exhaustive").feasible:
                return CheckResult("cache-soundness", False,
                                   f"excluded pair ({rid},{vid}) is feasible")
            audited += 1
    return CheckResult("cache-soundness", True,
                       f"{audited} excluded pairs re-checked infeasible")


def run_all(quick: bool = False) -> List[CheckResult]:
    scale = 0.3 if quick else 1.0

    def n(x):
        return max(5, int(x * scale))

    checks = [
        lambda: check_kernel_twins(trials=n(60)),
        lambda: check_route_enumeration(trials=n(50)),
        lambda: check_prune_equivalence(trials=n(120)),
        lambda: check_assignment_enumeration(trials=n(40)),
        lambda: check_matching_oracles(trials=n(60)),
        lambda: check_marginals(trials=n(200)),
        lambda: check_partitioning(trials=n(10)),
        lambda: check_cache_soundness(epochs=n(30)),
    ]
    out = []
    for fn in checks:
        try:
            out.append(fn())
        except Exception as exc:  # a crashed check is a failed check
            out.append(CheckResult(fn.__name__ if hasattr(fn, "__name__") else
                                   "check", False, f"raised {exc!r}"))
    return out

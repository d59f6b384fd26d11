"""Acceptance gate: ten end-to-end properties of the dispatch stack.

Each test prints one ``[PASS]``/``[FAIL]`` line.  The benchmark scenario is
fixed throughout: 15x15 grid with 60 s edges, 40 vehicles of capacity 4,
Poisson demand of 4 requests per 30 s epoch with a hotspot that relocates
every 30 minutes, 300 s waiting / 600 s delay windows, 6 simulated hours,
10 seeds.  Heavy runs are shared across criteria through module fixtures.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from ridepool.assignment import solve_assignment
from ridepool.cli import compare_table
from ridepool.fleet import CostParams, Request, VehicleState
from ridepool.pdp import PDPQuery, best_route
from ridepool.rebalance import marginal_probabilities
from ridepool.rvgraph import (RTVGraph, candidate_map, optimal_partition,
                              partition_requests, random_partition,
                              vehicle_position)
from ridepool.scenario import (DemandSpec, generate_history,
                               generate_requests, grid_network)
from ridepool.sim import SimConfig, run
from ridepool.solver import (IPInstance, MatchingInstance, min_cost_matching,
                             solve_lp)

N_SEEDS = 10
SIDE = 15


def _verdict(num: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    assert ok, line


def _desk_spec() -> DemandSpec:
    return DemandSpec(rows=SIDE, cols=SIDE, rate_per_epoch=4.0, n_epochs=720,
                      epoch_s=30.0, omega_s=300.0, delta_s=600.0,
                      hotspot_period_s=1800.0)


@pytest.fixture(scope="module")
def desk_net():
    return grid_network(SIDE, SIDE, edge_seconds=60.0)


# ---------------------------------------------------------------- audits

class RebalanceAudit:
    """Stream audit of one run's relocation tasks: every matched target used
    at most once per epoch (co-located targets are distinct columns), and a
    vehicle in transit to a target is never handed a new one."""

    def __init__(self):
        self.active = {}              # vehicle -> target it is traveling to
        self.issued = 0
        self.duplicate_targets = 0
        self.retasked_in_transit = 0
        self.silent_changes = 0

    def merge(self, other: "RebalanceAudit") -> None:
        self.issued += other.issued
        self.duplicate_targets += other.duplicate_targets
        self.retasked_in_transit += other.retasked_in_transit
        self.silent_changes += other.silent_changes

    def __call__(self, sim, m):
        fleet = {v.id: v for v in sim.fleet}
        if len(set(m.rebalance_columns)) != len(m.rebalance_columns):
            self.duplicate_targets += 1
        for vid, g in m.rebalance_tasks:
            self.issued += 1
            if vid in self.active and fleet[vid].loc != self.active[vid]:
                # a new task is legal only after arriving at the old target
                self.retasked_in_transit += 1
            self.active[vid] = g
        for vid in list(self.active):
            tgt = fleet[vid].rebalance_target
            if tgt is None:           # arrived, or absorbed into a route
                del self.active[vid]
            elif tgt != self.active[vid]:
                self.silent_changes += 1
                self.active[vid] = tgt
        for v in sim.fleet:           # no task may bypass the issuance log
            if v.rebalance_target is not None and v.id not in self.active:
                self.silent_changes += 1


class CacheAudit:
    """Recompute a sample of cache-excluded (request, vehicle) pairs by
    direct routing; any feasible hit disproves the cache's claim."""

    def __init__(self, net, per_run, seed, per_epoch=4):
        self.net = net
        self.target = per_run
        self.per_epoch = per_epoch
        self.rng = np.random.default_rng(seed)
        self.audited = 0
        self.feasible_hits = 0

    def __call__(self, sim, m):
        if sim.cache is None or self.audited >= self.target:
            return
        pairs = sim.cache.excluded_pairs(sorted(sim.pool),
                                         [v.id for v in sim.fleet])
        if not pairs:
            return
        take = min(self.per_epoch, len(pairs), self.target - self.audited)
        idx = self.rng.choice(len(pairs), size=take, replace=False)
        fleet = {v.id: v for v in sim.fleet}
        for i in sorted(int(j) for j in idx):
            rid, vid = pairs[i]
            v = fleet[vid]
            node, t0 = vehicle_position(v, sim.now)
            q = PDPQuery(start_node=node, start_time=t0, capacity=v.capacity,
                         new_requests=[sim.pool[rid]],
                         onboard_requests=[sim.onboard[p] for p in v.onboard])
            res = best_route(q, self.net, prune=True, method="exhaustive")
            self.audited += 1
            self.feasible_hits += int(res.feasible)


@pytest.fixture(scope="module")
def desk_runs(desk_net):
    """10 seeds x {speedup, speedup_proactive}, with rebalance auditing on
    every run and cache auditing on five of the accelerated runs."""
    spec = _desk_spec()
    rebal = RebalanceAudit()           # aggregate counters over all runs
    cache_audits = {}
    reports = {}
    t0 = time.perf_counter()
    for seed in range(N_SEEDS):
        ca = CacheAudit(desk_net, per_run=1000, seed=seed) if seed < 5 else None
        ra = RebalanceAudit()          # per-run: vehicle ids recur across runs

        def cb(sim, m, ca=ca, ra=ra):
            ra(sim, m)
            if ca is not None:
                ca(sim, m)

        reports[("speedup", seed)] = run(
            SimConfig(seed=seed, variant="speedup"), desk_net,
            generate_requests(desk_net, spec, seed), on_epoch=cb)
        if ca is not None:
            cache_audits[seed] = ca
        rebal.merge(ra)
        ra = RebalanceAudit()
        reports[("speedup_proactive", seed)] = run(
            SimConfig(seed=seed, variant="speedup_proactive"), desk_net,
            generate_requests(desk_net, spec, seed),
            history=generate_history(desk_net, spec, 10, seed), on_epoch=ra)
        rebal.merge(ra)
    return {"reports": reports, "rebal": rebal, "cache": cache_audits,
            "seconds": time.perf_counter() - t0}


# --------------------------------------------------- criteria 1-2: routing

def _near(rng, node, radius):
    r, c = divmod(node, SIDE)
    rr = min(SIDE - 1, max(0, r + int(rng.integers(-radius, radius + 1))))
    cc = min(SIDE - 1, max(0, c + int(rng.integers(-radius, radius + 1))))
    return rr * SIDE + cc


def _mk_query(net, rng):
    n_new = int(rng.integers(1, 5))          # <= 4 new requests
    n_onb = int(rng.integers(0, 3))          # <= 2 onboard
    start = int(rng.integers(0, net.n_nodes))
    reqs = []
    for rid in range(n_new + n_onb):
        o = _near(rng, start, 3)
        d = _near(rng, o, 8)
        while d == o:
            d = _near(rng, o, 8)
        reqs.append(Request(id=rid, origin=o, destination=d,
                            request_time=float(rng.integers(0, 60)),
                            direct_time=net.travel_time(o, d),
                            max_wait=300.0, max_delay=600.0))
    for r in reqs[n_new:]:
        r.mark_assigned(0)
        r.mark_onboard(r.request_time)
    return PDPQuery(start_node=start, start_time=float(rng.integers(0, 90)),
                    capacity=4, new_requests=reqs[:n_new],
                    onboard_requests=reqs[n_new:])


@pytest.fixture(scope="module")
def pdp_stats(desk_net):
    rng = np.random.default_rng(11)
    n = 10_000
    mismatches = 0
    explored_full = explored_pruned = 0
    feasible = 0
    t0 = time.perf_counter()
    for _ in range(n):
        q = _mk_query(desk_net, rng)
        full = best_route(q, desk_net, prune=False, method="exhaustive")
        pruned = best_route(q, desk_net, prune=True, method="exhaustive")
        if (pruned.feasible, pruned.cost, pruned.route) != (
                full.feasible, full.cost, full.route):
            mismatches += 1
        explored_full += full.explored
        explored_pruned += pruned.explored
        feasible += int(full.feasible)
    return {"n": n, "mismatches": mismatches, "feasible": feasible,
            "unpruned": explored_full, "pruned": explored_pruned,
            "seconds": time.perf_counter() - t0}


def test_c01_routing_prune_exactness(pdp_stats):
    s = pdp_stats
    ok = s["mismatches"] == 0 and s["seconds"] < 120.0
    _verdict(1, ok, f"{s['n']} queries ({s['feasible']} feasible), "
                    f"{s['mismatches']} mismatches between pruned and "
                    f"unpruned search, {s['seconds']:.1f}s")


def test_c02_routing_prune_saves_work(pdp_stats):
    s = pdp_stats
    ratio = s["pruned"] / s["unpruned"]
    _verdict(2, ratio <= 0.70,
             f"pruned search explored {s['pruned']} of {s['unpruned']} "
             f"partial routes (ratio {ratio:.3f} <= 0.70)")


# ------------------------------------------------ criterion 3: cache audit

def test_c03_cache_exclusions_always_infeasible(desk_runs):
    audits = desk_runs["cache"]
    total = sum(a.audited for a in audits.values())
    hits = sum(a.feasible_hits for a in audits.values())
    ok = (len(audits) == 5 and hits == 0
          and all(a.audited >= 1000 for a in audits.values()))
    _verdict(3, ok, f"{total} excluded pairs re-routed directly across "
                    f"{len(audits)} runs (>=1000 each), {hits} feasible")


# ------------------------------------- criterion 4: accelerated == original

def _decision_log(report) -> bytes:
    lines = [json.dumps({"epoch": m.epoch, "objective": m.objective,
                         "assigned": m.assigned_ids,
                         "rebalance": m.rebalance_tasks,
                         "completed": m.completed_total},
                        sort_keys=True) for m in report.epochs]
    return "\n".join(lines).encode()


def test_c04_speedups_change_nothing_but_work(desk_net):
    spec = _desk_spec()
    served = {}

    def capture(variant):
        def cb(sim, m):
            served[variant] = sorted(sim.completed) + sorted(
                r.id for r in sim.onboard.values() if r.pickup_time is not None)
        return cb

    reports = {}
    for variant in ("original", "speedup"):
        reports[variant] = run(
            SimConfig(seed=0, variant=variant,
                      rebalance_formulation="one_to_one"),
            desk_net, generate_requests(desk_net, spec, 0),
            on_epoch=capture(variant))
    a, b = reports["original"], reports["speedup"]
    same_log = _decision_log(a) == _decision_log(b)
    same_served = served["original"] == served["speedup"]
    fewer = b.mean_epoch_steps < a.mean_epoch_steps
    _verdict(4, same_log and same_served and fewer,
             f"per-epoch objectives/assignments byte-identical over "
             f"{len(a.epochs)} epochs, served sets identical "
             f"({len(served['original'])} requests), steps/epoch "
             f"{a.mean_epoch_steps:.0f} -> {b.mean_epoch_steps:.0f}")


# ------------------------------------------------ criterion 5: ILP solvers

def _random_rtv(rng):
    n_veh = int(rng.integers(1, 6))           # <= 5 vehicles
    n_req = int(rng.integers(1, 9))           # <= 8 requests
    rtv = RTVGraph()
    for _ in range(int(rng.integers(0, 9))):  # <= 8 trip-vehicle edges
        size = int(rng.integers(1, min(4, n_req) + 1))
        trip = tuple(sorted(rng.choice(n_req, size=size, replace=False).tolist()))
        vid = int(rng.integers(0, n_veh))
        if (trip, vid) not in rtv.tv_edges:
            rtv.trips.add(trip)
            rtv.tv_edges[(trip, vid)] = (float(rng.integers(1, 500)), [])
    return rtv, n_req


def _enumerate_assignment(rtv, n_req, penalty):
    vids = sorted({v for _, v in rtv.tv_edges})
    options = [[None] + sorted(t for (t, w) in rtv.tv_edges if w == v)
               for v in vids]
    best = math.inf
    for combo in itertools.product(*options) if vids else [()]:
        covered = set()
        cost = 0.0
        ok = True
        for v, trip in zip(vids, combo):
            if trip is None:
                continue
            if covered & set(trip):
                ok = False
                break
            covered |= set(trip)
            cost += rtv.tv_edges[(trip, v)][0]
        if ok:
            cost += penalty * (n_req - len(covered))
            best = min(best, cost)
    return best


def _matching_lp_objective(C, k):
    n, m = C.shape
    nv = n * m
    rows = []
    for i in range(n):
        coef = np.zeros(nv)
        coef[i * m:(i + 1) * m] = 1.0
        rows.append((coef, "<=", 1.0))
    for j in range(m):
        coef = np.zeros(nv)
        coef[j::m] = 1.0
        rows.append((coef, "<=", 1.0))
    rows.append((np.ones(nv), "=", float(k)))
    res = solve_lp(IPInstance(objective=C.reshape(-1), rows=rows,
                              lower=np.zeros(nv), upper=np.ones(nv),
                              integral=np.zeros(nv, dtype=bool)))
    return res.objective


def test_c05_assignment_and_matching_solvers_exact():
    from scipy.optimize import linear_sum_assignment

    rng = np.random.default_rng(17)
    params = CostParams(unserved_penalty=9000.0)
    bad = 0
    for _ in range(1000):
        rtv, n_req = _random_rtv(rng)
        sol = solve_assignment(rtv, list(range(n_req)), params)
        if sol.objective != _enumerate_assignment(rtv, n_req,
                                                  params.unserved_penalty):
            bad += 1
    bad_match = 0
    for _ in range(500):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        C = rng.integers(0, 100, size=(n, m)).astype(float)
        k = min(n, m)
        a = min_cost_matching(MatchingInstance(C, k)).objective
        b = _matching_lp_objective(C, k)
        ri, ci = linear_sum_assignment(C)
        c = float(C[ri, ci].sum())
        if abs(a - b) > 1e-9 or abs(a - c) > 1e-9:
            bad_match += 1
    _verdict(5, bad == 0 and bad_match == 0,
             f"1000 assignment instances == enumeration ({bad} off); "
             f"500 matching instances: matcher == LP == Hungarian to 1e-9 "
             f"({bad_match} off)")


# ----------------------------------------- criterion 6: demand marginals

def test_c06_marginal_probability_identities():
    rng = np.random.default_rng(23)
    worst = 0.0
    bad = 0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        w = rng.random(n + 1) + 1e-9
        P = w / math.fsum(w.tolist())
        p = marginal_probabilities(P)
        errs = [abs(p[i - 1] - math.fsum(P[i:].tolist()))
                for i in range(1, n + 1)]
        mean = math.fsum((np.arange(n + 1) * P).tolist())
        errs.append(abs(math.fsum(p.tolist()) - mean))
        worst = max(worst, max(errs))
        if max(errs) > 1e-12 or any(p[i] < p[i + 1] for i in range(n - 1)):
            bad += 1
    _verdict(6, bad == 0, f"1000 distributions: suffix-sum, monotonicity and "
                          f"expected-count identities hold to 1e-12 "
                          f"(worst error {worst:.2e})")


# --------------------------------------- criterion 7: forecasting pays off

def test_c07_proactive_beats_reactive_on_hotspot(desk_runs):
    reports = desk_runs["reports"]
    d_sr = [reports[("speedup_proactive", s)].service_rate
            - reports[("speedup", s)].service_rate for s in range(N_SEEDS)]
    d_delay = [reports[("speedup_proactive", s)].mean_total_delay_s
               - reports[("speedup", s)].mean_total_delay_s
               for s in range(N_SEEDS)]

    def mean_se(xs):
        mu = sum(xs) / len(xs)
        se = (sum((x - mu) ** 2 for x in xs) / (len(xs) - 1) / len(xs)) ** 0.5
        return mu, se

    sr_mu, sr_se = mean_se(d_sr)
    dl_mu, dl_se = mean_se(d_delay)
    ok = sr_mu > 0.0 and dl_mu < 0.0 and desk_runs["seconds"] < 1800.0
    _verdict(7, ok,
             f"over {N_SEEDS} seeds, service-rate delta {sr_mu:+.4f} "
             f"(se {sr_se:.4f}) > 0 and total-delay delta {dl_mu:+.1f}s "
             f"(se {dl_se:.1f}) < 0; runtime {desk_runs['seconds']:.0f}s")


# ------------------------------------ criterion 8: relocation discipline

def test_c08_relocation_tasks_never_conflict(desk_runs):
    a = desk_runs["rebal"]
    ok = (a.issued > 0 and a.duplicate_targets == 0
          and a.retasked_in_transit == 0 and a.silent_changes == 0)
    _verdict(8, ok, f"{a.issued} relocation tasks over {2 * N_SEEDS} runs: "
                    f"{a.duplicate_targets} duplicated targets, "
                    f"{a.retasked_in_transit} re-taskings in transit, "
                    f"{a.silent_changes} unlogged target changes")


# -------------------------------------- criterion 9: partition I/O proxy

HUB_A = 3 * SIDE + 3
HUB_B = 11 * SIDE + 11


def _blob_instance(net, rng, n_req, n_veh):
    reqs, fleet = [], []
    for i in range(n_req):
        o = HUB_A if i < n_req // 2 else HUB_B
        d = int(rng.integers(0, net.n_nodes))
        while d == o:
            d = int(rng.integers(0, net.n_nodes))
        reqs.append(Request(id=i, origin=o, destination=d, request_time=0.0,
                            direct_time=net.travel_time(o, d),
                            max_wait=300.0, max_delay=600.0))
    for j in range(n_veh):
        fleet.append(VehicleState(id=j, capacity=4,
                                  loc=HUB_A if j < n_veh // 2 else HUB_B))
    return reqs, fleet


def test_c09_kmeans_partition_quality(desk_net):
    rng = np.random.default_rng(31)
    wins = 0
    for t in range(100):
        reqs, fleet = _blob_instance(desk_net, rng, 40, 40)
        vr = candidate_map(reqs, fleet, 0.0, desk_net)
        km = partition_requests(reqs, 4, seed=t, vr=vr, net=desk_net)
        rd = random_partition(reqs, 4, seed=t, vr=vr)
        wins += int(km.io_cost <= rd.io_cost)
    matches = 0
    small = 20
    for t in range(small):
        reqs, fleet = _blob_instance(desk_net, rng,
                                     int(rng.integers(4, 11)), 12)
        vr = candidate_map(reqs, fleet, 0.0, desk_net)
        km = partition_requests(reqs, 4, seed=t, vr=vr, net=desk_net)
        matches += int(km.io_cost == optimal_partition(reqs, 4, vr))
    _verdict(9, wins >= 90 and matches == small,
             f"k-means <= random I/O cost in {wins}/100 two-blob instances; "
             f"== brute-force optimum in {matches}/{small} instances with "
             f"<= 10 requests")


# --------------------------------------------- criterion 10: determinism

def test_c10_reruns_are_byte_identical(desk_runs, desk_net):
    spec = _desk_spec()
    again = {
        ("speedup", 0): run(SimConfig(seed=0, variant="speedup"), desk_net,
                            generate_requests(desk_net, spec, 0)),
        ("speedup_proactive", 0): run(
            SimConfig(seed=0, variant="speedup_proactive"), desk_net,
            generate_requests(desk_net, spec, 0),
            history=generate_history(desk_net, spec, 10, 0)),
    }
    first = desk_runs["reports"]
    same_runs = all(first[key].to_json() == again[key].to_json()
                    for key in again)
    table_a = compare_table({v: [first[(v, 0)]]
                             for v in ("speedup", "speedup_proactive")})
    table_b = compare_table({v: [again[(v, 0)]]
                             for v in ("speedup", "speedup_proactive")})
    _verdict(10, same_runs and table_a == table_b,
             "independent re-runs reproduce reports and comparison tables "
             "byte for byte")

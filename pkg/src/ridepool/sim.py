"""The epoch loop: batch requests, move vehicles, match, rebalance, measure.

Every epoch (default 30 s) the simulator advances the fleet along its
committed routes, ingests the requests that arrived since the last
boundary, drops the ones whose pickup window lapsed, rebuilds the
shareability graphs, re-solves the assignment, and repositions whatever
is left idle.  Three variants differ only in which techniques are active:

* ``original``      — no feasibility cache, no search pruning, single
                      work slot, fractional total-moves rebalancing;
* ``speedup``       — cache + pruning + partitioned graph construction +
                      sampled one-to-one rebalancing;
* ``speedup_proactive`` — speedup plus probabilistic virtual targets.

Everything observable is deterministic under (config, seed): RNG streams
are derived from the seed, and canonical report serialization excludes
wall-clock timings (kept separately; step counts are the portable
computation measure).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import commit, solve_assignment
from .errors import ConfigError, DataError, InternalError
from .fleet import (
    ASSIGNED,
    CostParams,
    PENDING,
    Request,
    VehicleState,
    total_delay,
    waiting_time,
)
from .network import Network
from .rebalance import (
    ClusterModel,
    DemandHistogram,
    apply_tasks,
    build_clusters,
    fit_demand,
    generate_virtual_requests,
    proactive_rebalance,
    rebalance_baseline,
    rebalance_one_to_one,
    sample_for_rebalance,
    suppress_served_virtuals,
)
from .rvgraph import (
    FeasibleVehicleCache,
    build_rtv,
    build_rv,
    candidate_map,
    partition_requests,
)

VARIANTS = ("original", "speedup", "speedup_proactive")
REBALANCE_MODES = ("total_moves", "one_to_one")

# sub-stream offsets applied to the master seed
_SEED_REBALANCE = 1
_SEED_KMEANS = 2
_SEED_PLACEMENT = 3


@dataclass
class SimConfig:
    n_vehicles: int = 40
    capacity: int = 4
    epoch_s: float = 30.0
    omega_s: float = 300.0   # max waiting time
    delta_s: float = 600.0   # max total delay
    seed: int = 0
    variant: str = "speedup"
    rtv_budget: Optional[int] = None       # routing calls per vehicle, size >= 2 trips
    ip_budget: Optional[int] = None        # branch-and-bound LP solves
    partition_k: Optional[int] = None      # None -> variant default (1 or 4)
    rebalance_formulation: Optional[str] = None  # None -> variant default
    gamma: int = 3
    v_max: int = 300
    r_max: int = 600
    alpha_miles: float = 0.5
    p_min: float = 0.75
    lookahead_bins: int = 1
    suppression_mode: str = "per_vehicle"  # or "off"
    weight_by_probability: bool = False
    unserved_penalty: Optional[float] = None  # None -> 10 * (omega + delta)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.n_vehicles < 1 or self.capacity < 1:
            raise ConfigError("fleet size and capacity must be at least 1")
        if self.epoch_s <= 0 or self.omega_s <= 0:
            raise ConfigError("epoch_s and omega_s must be positive")
        if self.delta_s < self.omega_s:
            raise ConfigError("delta_s must be at least omega_s")
        if min(self.gamma, self.v_max, self.r_max) < 1:
            raise ConfigError("sampling caps must be at least 1")
        if not 0.0 <= self.p_min <= 1.0:
            raise ConfigError("p_min must lie in [0, 1]")
        if self.alpha_miles <= 0:
            raise ConfigError("alpha_miles must be positive")
        if self.lookahead_bins < 0:
            raise ConfigError("lookahead_bins must be non-negative")
        if self.rebalance_formulation not in (None,) + REBALANCE_MODES:
            raise ConfigError(
                f"unknown rebalance formulation {self.rebalance_formulation!r}")
        if self.suppression_mode not in ("per_vehicle", "off"):
            raise ConfigError(f"unknown suppression_mode {self.suppression_mode!r}")
        if self.partition_k is not None and self.partition_k < 1:
            raise ConfigError("partition_k must be at least 1")
        for name in ("rtv_budget", "ip_budget"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be None or >= 0")

    # variant-resolved switches
    @property
    def use_cache(self) -> bool:
        return self.variant != "original"

    @property
    def use_prune(self) -> bool:
        return self.variant != "original"

    @property
    def use_virtuals(self) -> bool:
        return self.variant == "speedup_proactive"

    @property
    def k_slots(self) -> int:
        if self.partition_k is not None:
            return self.partition_k
        return 1 if self.variant == "original" else 4

    @property
    def rebalance_mode(self) -> str:
        if self.rebalance_formulation is not None:
            return self.rebalance_formulation
        return "total_moves" if self.variant == "original" else "one_to_one"

    def cost_params(self) -> CostParams:
        if self.unserved_penalty is not None:
            return CostParams(unserved_penalty=self.unserved_penalty)
        return CostParams.for_windows(self.omega_s, self.delta_s)


@dataclass
class EpochMetrics:
    epoch: int
    now: float
    new_requests: int
    expired: int
    pending_end: int
    assigned_end: int
    onboard_end: int
    completed_total: int
    rejected_total: int
    pdp_calls: int
    pdp_explored: int
    ip_nodes: int
    ip_status: str
    objective: float
    assigned_ids: Tuple[int, ...]   # requests covered by this epoch's solution
    io_cost: int
    partition_slots: int
    rebalance_requested: int
    rebalance_issued: int
    rebalance_tasks: Tuple[Tuple[int, int], ...]   # (vehicle, target) pairs
    rebalance_columns: Tuple[int, ...]   # matched target indices; co-located
                                         # targets share a node, not a column
    virtual_targets: int
    rtv_complete: bool
    wall_s: float = 0.0    # measured; not part of the canonical record

    @property
    def steps(self) -> int:
        """Machine-independent computation proxy for this epoch."""
        return self.pdp_calls + self.pdp_explored + self.ip_nodes

    def to_dict(self) -> dict:
        d = {
            "epoch": self.epoch,
            "now": self.now,
            "new_requests": self.new_requests,
            "expired": self.expired,
            "pending_end": self.pending_end,
            "assigned_end": self.assigned_end,
            "onboard_end": self.onboard_end,
            "completed_total": self.completed_total,
            "rejected_total": self.rejected_total,
            "pdp_calls": self.pdp_calls,
            "pdp_explored": self.pdp_explored,
            "ip_nodes": self.ip_nodes,
            "ip_status": self.ip_status,
            "objective": self.objective,
            "assigned_ids": list(self.assigned_ids),
            "io_cost": self.io_cost,
            "partition_slots": self.partition_slots,
            "rebalance_requested": self.rebalance_requested,
            "rebalance_issued": self.rebalance_issued,
            "rebalance_tasks": [list(t) for t in self.rebalance_tasks],
            "rebalance_columns": list(self.rebalance_columns),
            "virtual_targets": self.virtual_targets,
            "rtv_complete": self.rtv_complete,
            "steps": self.steps,
        }
        return d


@dataclass
class RunReport:
    variant: str
    seed: int
    ingested: int
    completed: int
    onboard_at_end: int
    rejected: int
    service_rate: float
    mean_waiting_s: float
    mean_total_delay_s: float
    mean_epoch_steps: float
    empty_demand: bool
    epochs: List[EpochMetrics] = field(default_factory=list)
    wall_s_total: float = 0.0   # sidecar; excluded from canonical forms

    def to_json(self) -> str:
        """Canonical (byte-stable) serialization; wall-clock lives elsewhere."""
        doc = {
            "variant": self.variant,
            "seed": self.seed,
            "ingested": self.ingested,
            "completed": self.completed,
            "onboard_at_end": self.onboard_at_end,
            "rejected": self.rejected,
            "service_rate": self.service_rate,
            "mean_waiting_s": self.mean_waiting_s,
            "mean_total_delay_s": self.mean_total_delay_s,
            "mean_epoch_steps": self.mean_epoch_steps,
            "empty_demand": self.empty_demand,
            "epochs": [m.to_dict() for m in self.epochs],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def timing_sidecar(self) -> dict:
        return {
            "wall_s_total": self.wall_s_total,
            "wall_s_per_epoch": [m.wall_s for m in self.epochs],
        }


class Simulation:
    """Mutable run state; drive it with step() or via run()."""

    def __init__(
        self,
        config: SimConfig,
        net: Network,
        clusters: Optional[ClusterModel] = None,
        demand_model: Optional[DemandHistogram] = None,
        initial_locations: Optional[Sequence[int]] = None,
    ):
        config.validate()
        if config.use_virtuals and demand_model is None:
            raise ConfigError("proactive variant needs a fitted demand model")
        self.cfg = config
        self.net = net
        self.params = config.cost_params()
        self.clusters = clusters
        self.demand_model = demand_model
        if config.use_virtuals and clusters is None:
            raise ConfigError("proactive variant needs a cluster model")

        if initial_locations is not None:
            if len(initial_locations) != config.n_vehicles:
                raise ConfigError("initial_locations length != n_vehicles")
            locs = list(initial_locations)
        else:
            rng = np.random.default_rng(config.seed * 1000003 + _SEED_PLACEMENT)
            locs = rng.integers(0, net.n_nodes, size=config.n_vehicles)
        self.fleet = [
            VehicleState(id=i, capacity=config.capacity, loc=int(locs[i]))
            for i in range(config.n_vehicles)
        ]
        self.pool: Dict[int, Request] = {}       # pending + assigned (not picked up)
        self.onboard: Dict[int, Request] = {}
        self.completed: Dict[int, Request] = {}
        self.rejected: Dict[int, Request] = {}
        self.cache = FeasibleVehicleCache() if config.use_cache else None
        self.now = 0.0
        self.epoch = 0
        self.ingested = 0
        self.metrics: List[EpochMetrics] = []

    # ---------------------------------------------------------- movement

    def _walk_toward(self, v: VehicleState, target: int, t: float, end: float) -> float:
        """Advance v along shortest-path edges toward target; edges are only
        entered strictly before `end`, but once entered they complete (the
        vehicle may end up committed past the boundary).  Returns the time
        at which the vehicle sits at v.loc."""
        if v.loc == target:
            return t
        path = self.net.shortest_path(v.loc, target)
        if path is None:
            raise InternalError(
                f"vehicle {v.id}: no path {v.loc} -> {target}")
        for a, b in zip(path, path[1:]):
            if t >= end:
                break
            t += self.net.travel_time(a, b)
            v.loc = b
            v.position_time = t
        return t

    def _advance(self, dt: float) -> None:
        end = self.now + dt
        for v in sorted(self.fleet, key=lambda v: v.id):
            # routes were (re)committed at the boundary self.now, so nothing
            # departs earlier even if the vehicle has been parked for a while
            t = max(v.position_time, self.now)
            while v.route and t <= end:
                stop = v.route[0]
                if v.loc != stop.node:
                    t = self._walk_toward(v, stop.node, t, end)
                    if v.loc != stop.node:
                        break   # ran out of epoch mid-approach
                if t > end:
                    break       # arrives at the stop next epoch
                if stop.is_pickup:
                    r = self.pool.get(stop.request_id)
                    if r is None:
                        raise InternalError(
                            f"vehicle {v.id}: pickup for unknown request "
                            f"{stop.request_id}")
                    t = max(t, r.request_time)
                    if t > r.latest_pickup:
                        raise InternalError(
                            f"request {r.id}: pickup at {t} past deadline")
                    r.mark_onboard(t)
                    del self.pool[r.id]
                    self.onboard[r.id] = r
                    v.onboard.append(r.id)
                    if len(v.onboard) > v.capacity:
                        raise InternalError(f"vehicle {v.id} over capacity")
                    if self.cache is not None:
                        self.cache.drop(r.id)
                else:
                    r = self.onboard.get(stop.request_id)
                    if r is None:
                        raise InternalError(
                            f"vehicle {v.id}: dropoff for request "
                            f"{stop.request_id} not onboard")
                    if t > r.latest_dropoff:
                        raise InternalError(
                            f"request {r.id}: dropoff at {t} past deadline")
                    r.mark_completed(t)
                    del self.onboard[r.id]
                    self.completed[r.id] = r
                    v.onboard.remove(r.id)
                v.position_time = t
                v.route.pop(0)
            if not v.route and v.rebalance_target is not None and t <= end:
                t = self._walk_toward(v, v.rebalance_target, t, end)
                if v.loc == v.rebalance_target and t <= end:
                    v.rebalance_target = None

    # ---------------------------------------------------------- pipeline

    def _ingest(self, new_requests: Sequence[Request]) -> int:
        count = 0
        for r in sorted(new_requests, key=lambda r: r.id):
            if r.id in self.pool or r.id in self.onboard \
                    or r.id in self.completed or r.id in self.rejected:
                raise DataError(f"duplicate request id {r.id}")
            if r.request_time > self.now + 1e-9:
                raise DataError(
                    f"request {r.id} from the future: {r.request_time} > {self.now}")
            self.pool[r.id] = r
            self.ingested += 1
            count += 1
        return count

    def _expire(self) -> int:
        dropped = 0
        for rid in sorted(self.pool):
            r = self.pool[rid]
            if self.now - r.request_time > r.max_wait:
                if r.state == ASSIGNED:
                    raise InternalError(
                        f"request {rid} expired while assigned; a committed "
                        f"route would have picked it up in time")
                r.mark_rejected()
                self.rejected[rid] = self.pool.pop(rid)
                if self.cache is not None:
                    self.cache.drop(rid)
                dropped += 1
        return dropped

    def _rebalance(self) -> Tuple[int, int, int, List]:
        """Dispatch idle vehicles; returns (requested, issued, virtual count, tasks)."""
        cfg = self.cfg
        unserved = [self.pool[rid] for rid in sorted(self.pool)
                    if self.pool[rid].state == PENDING]
        idle = [v for v in sorted(self.fleet, key=lambda v: v.id) if v.is_idle]
        seed = cfg.seed * 1000003 + _SEED_REBALANCE + self.epoch
        caps = (cfg.v_max, cfg.r_max, cfg.gamma)

        if cfg.use_virtuals:
            virtuals = generate_virtual_requests(
                self.demand_model, self.clusters, self.now, cfg.p_min,
                lookahead_bins=cfg.lookahead_bins)
            if cfg.suppression_mode == "per_vehicle":
                virtuals = suppress_served_virtuals(
                    virtuals, idle, cfg.omega_s, self.net)
            tasks = proactive_rebalance(
                idle, unserved, virtuals, caps, self.net, seed,
                weight_costs=cfg.weight_by_probability)
            requested = min(len(idle), len(unserved) + len(virtuals))
            return requested, len(tasks), len(virtuals), tasks

        if cfg.rebalance_mode == "total_moves":
            tasks = rebalance_baseline(idle, unserved, self.net)
            apply_tasks(tasks, idle)
            return min(len(idle), len(unserved)), len(tasks), 0, tasks

        vs, rs = sample_for_rebalance(idle, unserved, caps, seed)
        tasks = rebalance_one_to_one(
            vs, [(r.origin, 1.0) for r in rs], self.net)
        apply_tasks(tasks, vs)
        return min(len(vs), len(rs)), len(tasks), 0, tasks

    def step(self, new_requests: Sequence[Request]) -> EpochMetrics:
        cfg = self.cfg
        self._advance(cfg.epoch_s)
        self.now += cfg.epoch_s
        self.epoch += 1
        n_new = self._ingest(new_requests)
        n_expired = self._expire()

        t0 = time.perf_counter()
        reqs = [self.pool[rid] for rid in sorted(self.pool)]
        vr = candidate_map(reqs, self.fleet, self.now, self.net)
        partition = partition_requests(
            reqs, cfg.k_slots,
            cfg.seed * 1000003 + _SEED_KMEANS + self.epoch, vr, self.net)
        rv = build_rv(reqs, self.fleet, self.onboard, self.now, self.net,
                      cache=self.cache, prune=cfg.use_prune,
                      partition=partition, epoch=self.epoch)
        rtv = build_rtv(rv, reqs, self.fleet, self.onboard, self.now, self.net,
                        budget_steps=cfg.rtv_budget, prune=cfg.use_prune)
        sol = solve_assignment(rtv, sorted(self.pool), self.params,
                               budget=cfg.ip_budget)
        commit(sol, rtv, self.fleet, self.pool, self.onboard, self.now, self.net)
        requested, issued, n_virtual, tasks = self._rebalance()
        wall = time.perf_counter() - t0

        assigned_ids = tuple(sorted(
            rid for trip, _ in sol.chosen for rid in trip))
        m = EpochMetrics(
            epoch=self.epoch,
            now=self.now,
            new_requests=n_new,
            expired=n_expired,
            pending_end=sum(1 for r in self.pool.values() if r.state == PENDING),
            assigned_end=sum(1 for r in self.pool.values() if r.state == ASSIGNED),
            onboard_end=len(self.onboard),
            completed_total=len(self.completed),
            rejected_total=len(self.rejected),
            pdp_calls=rv.pdp_calls + rtv.pdp_calls,
            pdp_explored=rv.explored + rtv.explored,
            ip_nodes=sol.nodes_explored,
            ip_status=sol.status,
            objective=sol.objective,
            assigned_ids=assigned_ids,
            io_cost=partition.io_cost,
            partition_slots=partition.k,
            rebalance_requested=requested,
            rebalance_issued=issued,
            rebalance_tasks=tuple((t.vehicle_id, t.target) for t in tasks),
            rebalance_columns=tuple(t.column for t in tasks),
            virtual_targets=n_virtual,
            rtv_complete=all(rtv.complete.values()) if rtv.complete else True,
            wall_s=wall,
        )
        self.metrics.append(m)
        return m

    # ------------------------------------------------------------- runs

    def conservation_ok(self) -> bool:
        return self.ingested == (
            len(self.completed) + len(self.onboard) + len(self.rejected)
            + len(self.pool))


def epoch_of(t: float, epoch_s: float) -> int:
    """Requests are batched to the first boundary at or after their arrival."""
    return max(1, int(math.ceil(t / epoch_s - 1e-12)))


def run(
    config: SimConfig,
    net: Network,
    demand: Sequence[Request],
    history: Optional[Sequence[Sequence[Request]]] = None,
    demand_model: Optional[DemandHistogram] = None,
    clusters: Optional[ClusterModel] = None,
    initial_locations: Optional[Sequence[int]] = None,
    on_epoch: Optional[Callable[["Simulation", EpochMetrics], None]] = None,
) -> RunReport:
    """Simulate the full stream plus a bounded drain phase, then report.

    on_epoch, if given, observes the live simulation after every step; it
    must not mutate state (external audits and progress reporting).
    """
    config.validate()
    if config.use_virtuals:
        if clusters is None:
            clusters = build_clusters(
                net, config.alpha_miles, seed=config.seed * 1000003 + _SEED_KMEANS)
        if demand_model is None:
            if history is None:
                raise ConfigError(
                    "proactive variant needs demand history or a fitted model")
            demand_model = fit_demand(history, clusters)
    sim = Simulation(config, net, clusters=clusters, demand_model=demand_model,
                     initial_locations=initial_locations)

    by_epoch: Dict[int, List[Request]] = {}
    for r in demand:
        by_epoch.setdefault(epoch_of(r.request_time, config.epoch_s), []).append(r)
    last = max(by_epoch) if by_epoch else 0
    for e in range(1, last + 1):
        m = sim.step(by_epoch.get(e, []))
        if on_epoch is not None:
            on_epoch(sim, m)

    drain_epochs = int(math.ceil(2.0 * (config.omega_s + config.delta_s)
                                 / config.epoch_s))
    for _ in range(drain_epochs):
        if not sim.pool and not sim.onboard:
            break
        m = sim.step([])
        if on_epoch is not None:
            on_epoch(sim, m)
    for rid in sorted(sim.pool):   # bounded termination: reject stragglers
        r = sim.pool.pop(rid)
        if r.state == ASSIGNED:
            r.revert_to_pending()
        r.mark_rejected()
        sim.rejected[rid] = r

    if not sim.conservation_ok():
        raise InternalError("request conservation violated at run end")

    served = list(sim.completed.values()) + [
        r for r in sim.onboard.values() if r.pickup_time is not None]
    waits = [waiting_time(r) for r in served]
    delays = [total_delay(r) for r in sim.completed.values()]
    n_epochs = len(sim.metrics)
    report = RunReport(
        variant=config.variant,
        seed=config.seed,
        ingested=sim.ingested,
        completed=len(sim.completed),
        onboard_at_end=len(sim.onboard),
        rejected=len(sim.rejected),
        service_rate=(len(served) / sim.ingested) if sim.ingested else 1.0,
        mean_waiting_s=(sum(waits) / len(waits)) if waits else 0.0,
        mean_total_delay_s=(sum(delays) / len(delays)) if delays else 0.0,
        mean_epoch_steps=(sum(m.steps for m in sim.metrics) / n_epochs)
        if n_epochs else 0.0,
        empty_demand=sim.ingested == 0,
        epochs=sim.metrics,
        wall_s_total=sum(m.wall_s for m in sim.metrics),
    )
    return report

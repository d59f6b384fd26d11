"""Idle-vehicle repositioning.

Three dispatch modes build on each other:

* a fractional baseline that only constrains the *total* number of moves
  (kept as an experimental reference; its vertex solutions can double-book
  a vehicle, which we repair after rounding),
* a one-to-one assignment of sampled idle vehicles to sampled unserved
  requests via min-cost matching, and
* a proactive mode that adds *virtual* targets: cluster representatives
  whose forecast demand clears a probability threshold.

The forecast layer turns per-day historical request counts into empirical
count distributions P(n | cluster, time-of-day bin) and reads off marginal
probabilities by suffix summation: p_i = P(count >= i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cluster import cluster_medoids, kmeans
from .errors import DataError, InternalError
from .fleet import VehicleState
from .network import Network
from .solver import MatchingInstance, min_cost_matching

DEFAULT_BIN_S = 300.0


@dataclass
class RebalanceTask:
    vehicle_id: int
    target: int
    tau: float     # estimated drive time, seconds
    column: int = -1   # index of the matched target in the caller's list;
                       # distinct targets can share a node, columns cannot


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray            # (k, 2) planar miles
    node_cluster: np.ndarray         # node -> cluster label
    representatives: List[int]       # node nearest each centroid


@dataclass
class DemandHistogram:
    """Empirical count distributions keyed by (cluster, time-of-day bin).

    A key that was never observed means "no demand ever": P(0) = 1.
    """
    bin_seconds: float = DEFAULT_BIN_S
    dists: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def distribution(self, cluster: int, bin_index: int) -> np.ndarray:
        return self.dists.get((cluster, bin_index), np.array([1.0]))

    def bin_of(self, t: float) -> int:
        return int(t // self.bin_seconds)


@dataclass
class VirtualRequest:
    cluster: int
    origin: int          # the cluster representative node
    probability: float
    rank: int            # 1-based; probability is non-increasing in rank


# --------------------------------------------------------------- dispatch

def apply_tasks(tasks: Sequence[RebalanceTask], fleet: Sequence[VehicleState]) -> None:
    """Point each tasked vehicle at its target; vehicles must be truly idle."""
    by_id = {v.id: v for v in fleet}
    for task in tasks:
        v = by_id[task.vehicle_id]
        if v.onboard or v.route or v.rebalance_target is not None:
            raise InternalError(
                f"vehicle {v.id} tasked to rebalance while busy"
            )
        v.rebalance_target = task.target


def rebalance_baseline(
    idle: Sequence[VehicleState], unserved: Sequence, net: Network
) -> List[RebalanceTask]:
    """Fractional relaxation: move exactly min(#idle, #unserved) units of
    vehicle toward unserved origins at minimum total drive time.

    The only constraint is the move count, so a vertex can pick two moves
    for the same vehicle; such double-bookings are repaired greedily
    (cheapest pair first) before tasks are issued.
    """
    from .solver import IPInstance, solve_lp

    vehicles = sorted(idle, key=lambda v: v.id)
    targets = sorted(unserved, key=lambda r: r.id)
    if not vehicles or not targets:
        return []
    n_v, n_r = len(vehicles), len(targets)
    tau = np.empty((n_v, n_r))
    for i, v in enumerate(vehicles):
        for j, r in enumerate(targets):
            tau[i, j] = net.travel_time(v.loc, r.origin)

    n = n_v * n_r
    rows = [(np.ones(n), "=", float(min(n_v, n_r)))]
    inst = IPInstance(tau.ravel(), rows, np.zeros(n), np.ones(n),
                      np.zeros(n, dtype=bool))
    res = solve_lp(inst)
    if res.values is None:
        return []
    chosen = [(float(tau[i, j]), i, j)
              for i in range(n_v) for j in range(n_r)
              if res.values[i * n_r + j] > 0.5]
    chosen.sort()
    used_v: set = set()
    used_t: set = set()
    tasks = []
    for t, i, j in chosen:
        if i in used_v or j in used_t:
            continue
        used_v.add(i)
        used_t.add(j)
        tasks.append(RebalanceTask(vehicles[i].id, targets[j].origin, t, j))
    tasks.sort(key=lambda task: task.vehicle_id)
    return tasks


def sample_for_rebalance(
    idle: Sequence[VehicleState],
    unserved: Sequence,
    caps: Tuple[int, int, int],
    seed: int,
) -> Tuple[List[VehicleState], List]:
    """Cap the matching size: at most r_max requests, then at most
    min(v_max, gamma * kept_requests) vehicles, sampled uniformly."""
    v_max, r_max, gamma = caps
    if v_max <= 0 or r_max <= 0 or gamma <= 0:
        raise DataError("sampling caps must be positive")
    rng = np.random.default_rng(seed)
    requests = _sample(rng, sorted(unserved, key=lambda r: r.id), r_max)
    cap_v = min(v_max, gamma * min(len(unserved), r_max))
    vehicles = _sample(rng, sorted(idle, key=lambda v: v.id), cap_v)
    return vehicles, requests


def _sample(rng: np.random.Generator, items: list, cap: int) -> list:
    if len(items) <= cap:
        return list(items)
    keep = rng.choice(len(items), size=cap, replace=False)
    return [items[i] for i in sorted(keep.tolist())]


def rebalance_one_to_one(
    idle_subset: Sequence[VehicleState],
    target_subset: Sequence[Tuple[int, float]],
    net: Network,
    weight_costs: bool = False,
) -> List[RebalanceTask]:
    """Min-cost matching of idle vehicles to (node, weight) targets.

    Match size is min(#vehicles, #targets), reduced if unreachable pairs
    make that infeasible.  With weight_costs the edge cost becomes tau/weight,
    preferring likelier targets; tau itself is always reported in the task.
    """
    vehicles = sorted(idle_subset, key=lambda v: v.id)
    if not vehicles or not target_subset:
        return []
    tau = np.empty((len(vehicles), len(target_subset)))
    cost = np.empty_like(tau)
    for i, v in enumerate(vehicles):
        for j, (node, weight) in enumerate(target_subset):
            tau[i, j] = net.travel_time(v.loc, node)
            cost[i, j] = tau[i, j] / weight if weight_costs else tau[i, j]

    k = min(len(vehicles), len(target_subset))
    while k > 0:
        res = min_cost_matching(MatchingInstance(cost, k))
        if res.status == "optimal":
            break
        k -= 1
    if k == 0:
        return []
    tasks = [
        RebalanceTask(vehicles[i].id, target_subset[j][0], float(tau[i, j]), j)
        for i, j in res.pairs
    ]
    tasks.sort(key=lambda task: task.vehicle_id)
    return tasks


# --------------------------------------------------------------- forecast

def build_clusters(net: Network, alpha_miles: float, seed: int = 0) -> ClusterModel:
    """Partition the node set so each cluster covers roughly the reach of a
    walking radius: k = round(hull area / (2 * pi * alpha^2))."""
    if alpha_miles <= 0:
        raise DataError("walking radius must be positive")
    area = net.hull_area()
    k = max(1, int(round(area / (2.0 * math.pi * alpha_miles ** 2))))
    k = min(k, net.n_nodes)
    labels, centroids = kmeans(net.coords, k, seed)
    reps = cluster_medoids(net.coords, labels, centroids)
    if any(r < 0 for r in reps):
        raise InternalError("clustering produced an empty cluster")
    return ClusterModel(k, centroids, labels, reps)


def fit_demand(
    history_days: Sequence[Sequence],
    clusters: ClusterModel,
    bin_seconds: float = DEFAULT_BIN_S,
) -> DemandHistogram:
    """Empirical P(n | cluster, bin) over daily request counts.

    Days in which a (cluster, bin) saw nothing count as zeros, so the
    distribution support is always 0..max_observed.
    """
    model = DemandHistogram(bin_seconds=bin_seconds)
    n_days = len(history_days)
    if n_days == 0:
        return model
    per_day: List[Dict[Tuple[int, int], int]] = []
    for day in history_days:
        counts: Dict[Tuple[int, int], int] = {}
        for r in day:
            key = (int(clusters.node_cluster[r.origin]),
                   int(r.request_time // bin_seconds))
            counts[key] = counts.get(key, 0) + 1
        per_day.append(counts)
    keys = sorted(set().union(*per_day)) if per_day else []
    for key in keys:
        daily = [counts.get(key, 0) for counts in per_day]
        dist = np.zeros(max(daily) + 1)
        for c in daily:
            dist[c] += 1.0
        model.dists[key] = dist / n_days
    return model


def marginal_probabilities(P: Sequence[float]) -> np.ndarray:
    """p_i = P(count >= i) for i = 1..n_max, via suffix sums."""
    P = np.asarray(P, dtype=float)
    if abs(float(P.sum()) - 1.0) > 1e-9:
        raise DataError("count distribution does not sum to 1")
    if P.size <= 1:
        return np.zeros(0)
    suffix = np.cumsum(P[::-1])[::-1]
    return suffix[1:]


def generate_virtual_requests(
    model: DemandHistogram,
    clusters: ClusterModel,
    now: float,
    p_min: float,
    lookahead_bins: int = 1,
) -> List[VirtualRequest]:
    """Per cluster, one virtual request per rank whose marginal probability
    strictly exceeds p_min, looking one bin ahead of `now` by default."""
    b = model.bin_of(now + lookahead_bins * model.bin_seconds)
    out: List[VirtualRequest] = []
    for o in range(clusters.k):
        p = marginal_probabilities(model.distribution(o, b))
        rep = clusters.representatives[o]
        for i, p_i in enumerate(p, start=1):
            if p_i > p_min:
                out.append(VirtualRequest(o, rep, float(p_i), i))
    return out


def suppress_served_virtuals(
    virtuals: Sequence[VirtualRequest],
    idle: Sequence[VehicleState],
    omega_s: float,
    net: Network,
) -> List[VirtualRequest]:
    """Each idle, non-rebalancing vehicle within omega/2 of a cluster's
    representative cancels that cluster's least likely remaining virtual."""
    if not virtuals:
        return []
    threshold = omega_s / 2.0
    vehicles = [v for v in sorted(idle, key=lambda v: v.id)
                if v.rebalance_target is None]
    kept: List[VirtualRequest] = []
    by_cluster: Dict[int, List[VirtualRequest]] = {}
    for vr in virtuals:
        by_cluster.setdefault(vr.cluster, []).append(vr)
    for o in sorted(by_cluster):
        group = sorted(by_cluster[o], key=lambda vr: vr.rank)
        rep = group[0].origin
        nearby = sum(1 for v in vehicles if net.travel_time(v.loc, rep) <= threshold)
        kept.extend(group[: max(0, len(group) - nearby)])
    kept.sort(key=lambda vr: (vr.cluster, vr.rank))
    return kept


def proactive_rebalance(
    idle: Sequence[VehicleState],
    unserved_real: Sequence,
    virtuals: Sequence[VirtualRequest],
    caps: Tuple[int, int, int],
    net: Network,
    seed: int,
    weight_costs: bool = False,
) -> List[RebalanceTask]:
    """One-to-one dispatch toward real unserved origins plus virtual targets.

    Real requests always survive the request cap; virtuals fill what is
    left.  Chosen vehicles get their rebalance_target set here.
    """
    v_max, r_max, gamma = caps
    if v_max <= 0 or r_max <= 0 or gamma <= 0:
        raise DataError("sampling caps must be positive")
    rng = np.random.default_rng(seed)
    real = _sample(rng, sorted(unserved_real, key=lambda r: r.id), r_max)
    virt = _sample(rng, list(virtuals), max(0, r_max - len(real)))
    targets: List[Tuple[int, float]] = (
        [(r.origin, 1.0) for r in real]
        + [(vr.origin, vr.probability) for vr in virt]
    )
    total = len(unserved_real) + len(virtuals)
    cap_v = min(v_max, gamma * min(total, r_max))
    candidates = [v for v in sorted(idle, key=lambda v: v.id)
                  if v.rebalance_target is None]
    vehicles = _sample(rng, candidates, cap_v)
    tasks = rebalance_one_to_one(vehicles, targets, net, weight_costs=weight_costs)
    apply_tasks(tasks, vehicles)
    return tasks


# ------------------------------------------------------------ persistence

def save_demand_model(model: DemandHistogram, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# bin_seconds {model.bin_seconds!r}\n")
        fh.write("cluster_id,bin_index,count_value,probability\n")
        for (o, b) in sorted(model.dists):
            for n, p in enumerate(model.dists[(o, b)]):
                fh.write(f"{o},{b},{n},{float(p)!r}\n")


def load_demand_model(path: str) -> DemandHistogram:
    bin_seconds = DEFAULT_BIN_S
    rows: List[Tuple[int, int, int, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "bin_seconds":
                    bin_seconds = float(parts[1])
                continue
            if line.startswith("cluster_id"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            try:
                rows.append((int(parts[0]), int(parts[1]),
                             int(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    model = DemandHistogram(bin_seconds=bin_seconds)
    sizes: Dict[Tuple[int, int], int] = {}
    for o, b, n, _ in rows:
        sizes[(o, b)] = max(sizes.get((o, b), 0), n + 1)
    for key, size in sizes.items():
        model.dists[key] = np.zeros(size)
    for o, b, n, p in rows:
        model.dists[(o, b)][n] = p
    for key, dist in model.dists.items():
        if abs(float(dist.sum()) - 1.0) > 1e-9:
            raise DataError(f"demand model entry {key} does not sum to 1")
    return model

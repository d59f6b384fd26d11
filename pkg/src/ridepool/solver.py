"""Self-contained exact solvers for the dispatch pipeline.

- solve_lp: dense primal simplex, two phases, with native variable bounds
  (box constraints never become tableau rows) and Bland's rule so the pivot
  order is deterministic and cycling-free.
- solve_ip: best-first branch-and-bound on the LP relaxation with an
  optional warm-start incumbent and an anytime node budget.
- min_cost_matching: successive shortest augmenting paths with potentials,
  exact cardinality, +inf entries forbidden.

Instances here are tiny (tens of rows, hundreds of columns), so everything
is dense numpy and clarity wins over speed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InternalError

OPTIMAL = "optimal"
INCUMBENT = "incumbent_budget_exhausted"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_EPS = 1e-9
_FEAS_TOL = 1e-7


@dataclass
class IPInstance:
    """min c@x  s.t. rows (coeffs, relation, rhs), lower <= x <= upper."""

    objective: np.ndarray
    rows: list                      # [(coeffs: np.ndarray, rel: "<="|">="|"=", rhs: float)]
    lower: np.ndarray
    upper: np.ndarray               # np.inf allowed
    integral: np.ndarray            # bool mask
    names: Optional[list] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.integral = np.asarray(self.integral, dtype=bool)
        n = len(self.objective)
        if not (len(self.lower) == len(self.upper) == len(self.integral) == n):
            raise InternalError("inconsistent instance dimensions")
        if not np.all(np.isfinite(self.objective)):
            raise InternalError("non-finite objective coefficients")
        if not np.all(np.isfinite(self.lower)):
            raise InternalError("lower bounds must be finite")
        for coeffs, rel, rhs in self.rows:
            if rel not in ("<=", ">=", "="):
                raise InternalError(f"bad relation {rel!r}")
            if len(coeffs) != n or not np.all(np.isfinite(coeffs)) or not math.isfinite(rhs):
                raise InternalError("bad constraint row")

    @property
    def n_vars(self) -> int:
        return len(self.objective)


@dataclass
class SolveResult:
    status: str
    values: Optional[np.ndarray]
    objective: float
    nodes_explored: int = 0
    pairs: Optional[list] = None    # matching results only


def violation(inst: IPInstance, x: np.ndarray) -> float:
    """Largest constraint/bound violation of x (0 means feasible)."""
    worst = 0.0
    worst = max(worst, float(np.max(inst.lower - x, initial=0.0)))
    finite = np.isfinite(inst.upper)
    if finite.any():
        worst = max(worst, float(np.max((x - inst.upper)[finite], initial=0.0)))
    for coeffs, rel, rhs in inst.rows:
        lhs = float(np.dot(coeffs, x))
        if rel == "<=":
            worst = max(worst, lhs - rhs)
        elif rel == ">=":
            worst = max(worst, rhs - lhs)
        else:
            worst = max(worst, abs(lhs - rhs))
    return worst


# ------------------------------------------------------------------ simplex

_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2


def solve_lp(inst: IPInstance) -> SolveResult:
    """Optimal basic solution of the LP relaxation (integrality ignored)."""
    n = inst.n_vars
    m = len(inst.rows)
    c_user = inst.objective

    # columns: structural vars, then one slack per inequality row, then one
    # artificial per row
    n_slack = sum(1 for _, rel, _ in inst.rows if rel != "=")
    K = n + n_slack + m
    A = np.zeros((m, K))
    b = np.zeros(m)
    lo = np.zeros(K)
    up = np.full(K, math.inf)
    lo[:n] = inst.lower
    up[:n] = inst.upper
    si = n
    for i, (coeffs, rel, rhs) in enumerate(inst.rows):
        A[i, :n] = coeffs
        b[i] = rhs
        if rel == "<=":
            A[i, si] = 1.0
            si += 1
        elif rel == ">=":
            A[i, si] = -1.0
            si += 1
    art0 = n + n_slack

    # start: every non-artificial variable at its lower bound; artificials
    # absorb the residual so the initial basis is the identity
    val = lo.copy()
    val[art0:] = 0.0
    resid = b - A[:, :art0] @ val[:art0]
    for i in range(m):
        A[i, art0 + i] = 1.0 if resid[i] >= 0.0 else -1.0
    xB = np.abs(resid)
    basis = np.arange(art0, art0 + m)
    stat = np.full(K, _AT_LOWER, dtype=np.int8)
    stat[basis] = _BASIC
    T = A.copy()  # B = identity (up to artificial signs): normalize rows
    for i in range(m):
        if A[i, art0 + i] < 0.0:
            T[i, :] = -T[i, :]
            # keep the artificial column itself +1 in its own row
    # after normalization B^-1 A = T with basis columns forming identity

    def run_phase(c_all: np.ndarray, allow: np.ndarray) -> str:
        nonlocal T, xB, basis, stat, val
        max_iter = 50 * (m + K) + 1000
        for _ in range(max_iter):
            cB = c_all[basis]
            z = c_all - cB @ T
            enter = -1
            direction = 0
            for j in range(K):
                if stat[j] == _BASIC or not allow[j] or up[j] - lo[j] <= 0.0:
                    continue
                if stat[j] == _AT_LOWER and z[j] < -_EPS:
                    enter, direction = j, 1
                    break
                if stat[j] == _AT_UPPER and z[j] > _EPS:
                    enter, direction = j, -1
                    break
            if enter < 0:
                return OPTIMAL
            d = T[:, enter]
            # ratio test: smallest step that drives a basic variable (or the
            # entering variable itself) to a bound
            t_best = up[enter] - lo[enter]
            cand = [(enter, -1)] if math.isfinite(t_best) else []
            if not cand:
                t_best = math.inf
            for i in range(m):
                di = direction * d[i]
                if di > _EPS:
                    ti = (xB[i] - lo[basis[i]]) / di
                elif di < -_EPS:
                    if not math.isfinite(up[basis[i]]):
                        continue
                    ti = (up[basis[i]] - xB[i]) / (-di)
                else:
                    continue
                if ti < t_best - 1e-12:
                    t_best = ti
                    cand = [(basis[i], i)]
                elif ti <= t_best + 1e-12:
                    cand.append((basis[i], i))
            if not cand or not math.isfinite(t_best):
                return UNBOUNDED
            t_best = max(t_best, 0.0)
            # Bland: among blocking candidates leave the smallest variable id
            leave_var, leave_row = min(cand)
            xB = xB - direction * t_best * d
            if leave_row < 0:
                # bound flip, no basis change
                stat[enter] = _AT_UPPER if direction > 0 else _AT_LOWER
                val[enter] = up[enter] if direction > 0 else lo[enter]
                continue
            enter_val = (lo[enter] if direction > 0 else up[enter]) + direction * t_best
            # leaving variable parks exactly on the bound it hit
            di = direction * d[leave_row]
            stat[leave_var] = _AT_LOWER if di > 0 else _AT_UPPER
            val[leave_var] = lo[leave_var] if di > 0 else up[leave_var]
            piv = T[leave_row, enter]
            if abs(piv) < _EPS:
                raise InternalError("degenerate pivot element")
            T[leave_row, :] = T[leave_row, :] / piv
            for i in range(m):
                if i != leave_row and T[i, enter] != 0.0:
                    T[i, :] = T[i, :] - T[i, enter] * T[leave_row, :]
            basis[leave_row] = enter
            stat[enter] = _BASIC
            xB[leave_row] = enter_val
        raise InternalError("simplex iteration limit exceeded")

    # phase 1: minimize artificial mass
    c1 = np.zeros(K)
    c1[art0:] = 1.0
    allow = np.ones(K, dtype=bool)
    status = run_phase(c1, allow)
    if status == UNBOUNDED:
        raise InternalError("phase-1 objective cannot be unbounded")
    art_mass = float(sum(xB[i] for i in range(m) if basis[i] >= art0)) + float(
        sum(val[j] for j in range(art0, K) if stat[j] != _BASIC)
    )
    if art_mass > _FEAS_TOL:
        return SolveResult(INFEASIBLE, None, math.inf)

    # pin artificials to zero and optimize the real objective
    for j in range(art0, K):
        up[j] = 0.0
        if stat[j] != _BASIC:
            val[j] = 0.0
    allow[art0:] = False
    c2 = np.zeros(K)
    c2[:n] = c_user
    status = run_phase(c2, allow)
    if status == UNBOUNDED:
        return SolveResult(UNBOUNDED, None, -math.inf)

    x_full = val.copy()
    x_full[basis] = xB
    x = x_full[:n]
    return SolveResult(OPTIMAL, x, float(np.dot(c_user, x)))


# ------------------------------------------------------------- branch & bound

def solve_ip(
    inst: IPInstance,
    warm_start: Optional[np.ndarray] = None,
    budget: Optional[int] = None,
    wall_limit: Optional[float] = None,
) -> SolveResult:
    """Exact binary/integer minimum via best-first branch-and-bound.

    budget caps the number of LP relaxations solved; on exhaustion the best
    incumbent so far is returned with status incumbent_budget_exhausted (the
    warm start counts as an incumbent, so the result is never worse than it).
    wall_limit is a soft seconds cap for interactive use; leave it None
    whenever reproducibility matters.
    """
    import time

    best_x = None
    best_obj = math.inf
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        if violation(inst, ws) > _FEAS_TOL or not _is_integral(inst, ws):
            raise InternalError("warm start is not a feasible integral point")
        best_x = _snap(inst, ws)
        best_obj = float(np.dot(inst.objective, best_x))

    if budget is not None and budget <= 0:
        # not even the root relaxation fits: hand back the warm start
        return SolveResult(INCUMBENT, best_x, best_obj, 0)

    nodes = 0
    seq = 0
    t0 = time.monotonic()
    heap: list = []
    root = (inst.lower.copy(), inst.upper.copy())
    root_res = solve_lp(_with_bounds(inst, *root))
    nodes += 1
    exhausted = False
    if root_res.status == UNBOUNDED:
        raise InternalError("integer program with unbounded relaxation")
    if root_res.status == OPTIMAL:
        if _is_integral(inst, root_res.values):
            x = _snap(inst, root_res.values)
            obj = float(np.dot(inst.objective, x))
            if obj < best_obj:
                best_x, best_obj = x, obj
            return SolveResult(OPTIMAL, best_x, best_obj, nodes)
        heapq.heappush(heap, (root_res.objective, seq, root, root_res.values))
        seq += 1

    while heap:
        if budget is not None and nodes >= budget:
            exhausted = True
            break
        if wall_limit is not None and time.monotonic() - t0 > wall_limit:
            exhausted = True
            break
        bound, _, (blo, bup), relax_x = heapq.heappop(heap)
        if bound >= best_obj - _EPS:
            break  # best-first: every open node is at least this bad
        j = _most_fractional(inst, relax_x)
        fl = math.floor(relax_x[j] + _EPS)
        for lo_j, up_j in (((blo[j], float(fl))), ((float(fl + 1), bup[j]))):
            clo, cup = blo.copy(), bup.copy()
            clo[j], cup[j] = lo_j, up_j
            if clo[j] > cup[j] + _EPS:
                continue
            res = solve_lp(_with_bounds(inst, clo, cup))
            nodes += 1
            if res.status != OPTIMAL or res.objective >= best_obj - _EPS:
                continue
            if _is_integral(inst, res.values):
                x = _snap(inst, res.values)
                obj = float(np.dot(inst.objective, x))
                if obj < best_obj - _EPS:
                    best_x, best_obj = x, obj
            else:
                heapq.heappush(heap, (res.objective, seq, (clo, cup), res.values))
                seq += 1

    if exhausted:
        return SolveResult(INCUMBENT, best_x, best_obj, nodes)
    if best_x is None:
        return SolveResult(INFEASIBLE, None, math.inf, nodes)
    return SolveResult(OPTIMAL, best_x, best_obj, nodes)


def _with_bounds(inst: IPInstance, lo: np.ndarray, up: np.ndarray) -> IPInstance:
    return IPInstance(inst.objective, inst.rows, lo, up, inst.integral, inst.names)


def _is_integral(inst: IPInstance, x: np.ndarray, tol: float = 1e-6) -> bool:
    xi = x[inst.integral]
    return bool(np.all(np.abs(xi - np.round(xi)) <= tol))


def _snap(inst: IPInstance, x: np.ndarray) -> np.ndarray:
    out = np.array(x, dtype=float)
    out[inst.integral] = np.round(out[inst.integral])
    return out


def _most_fractional(inst: IPInstance, x: np.ndarray) -> int:
    best_j = -1
    best_score = math.inf
    for j in range(inst.n_vars):
        if not inst.integral[j]:
            continue
        frac = x[j] - math.floor(x[j])
        dist = abs(frac - 0.5)
        if dist >= 0.5 - 1e-6:
            continue  # effectively integral
        if dist < best_score - 1e-12:
            best_score = dist
            best_j = j
    if best_j < 0:
        raise InternalError("no fractional variable to branch on")
    return best_j


# ------------------------------------------------------------------ matching

@dataclass
class MatchingInstance:
    """Bipartite min-cost matching of exact cardinality; inf = forbidden pair."""

    costs: np.ndarray
    cardinality: int

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if c.size == 0:
            c = c.reshape(c.shape[0] if c.ndim >= 1 else 0, 0)
        if c.ndim != 2:
            raise InternalError(f"cost matrix must be 2-D, got shape {c.shape}")
        self.costs = c
        if not 0 <= self.cardinality <= min(c.shape):
            raise InternalError(
                f"cardinality {self.cardinality} impossible for shape {c.shape}"
            )


def min_cost_matching(inst: MatchingInstance) -> SolveResult:
    """Cheapest set of exactly `cardinality` disjoint row-col pairs.

    Successive shortest augmenting paths with Johnson potentials; each
    augmentation adds one pair, and the partial matching after k rounds is a
    minimum-cost cardinality-k matching, so stopping at the requested
    cardinality is exact.
    """
    C = inst.costs
    n, m = C.shape
    k = inst.cardinality
    if k == 0:
        return SolveResult(OPTIMAL, np.zeros(n * m), 0.0, 0, pairs=[])

    finite = np.isfinite(C)
    shift = 0.0
    if finite.any():
        low = float(C[finite].min())
        if low < 0.0:
            shift = -low  # make reduced costs start non-negative

    # node ids: source, rows, cols, sink
    S = 0
    T = 1 + n + m
    n_nodes = n + m + 2
    graph: list[list[int]] = [[] for _ in range(n_nodes)]
    to: list[int] = []
    cap: list[int] = []
    cost: list[float] = []

    def add_edge(u, v, c, w):
        graph[u].append(len(to))
        to.append(v); cap.append(c); cost.append(w)
        graph[v].append(len(to))
        to.append(u); cap.append(0); cost.append(-w)

    for r in range(n):
        add_edge(S, 1 + r, 1, 0.0)
    for r in range(n):
        for c in range(m):
            if finite[r, c]:
                add_edge(1 + r, 1 + n + c, 1, float(C[r, c]) + shift)
    for c in range(m):
        add_edge(1 + n + c, T, 1, 0.0)

    phi = [0.0] * n_nodes
    matched = 0
    for _ in range(k):
        dist = [math.inf] * n_nodes
        par_edge = [-1] * n_nodes
        dist[S] = 0.0
        heap = [(0.0, S)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u] + 1e-15:
                continue
            for eid in graph[u]:
                if cap[eid] <= 0:
                    continue
                v = to[eid]
                nd = d + cost[eid] + phi[u] - phi[v]
                if nd < dist[v] - 1e-15:
                    dist[v] = nd
                    par_edge[v] = eid
                    heapq.heappush(heap, (nd, v))
        if math.isinf(dist[T]):
            return SolveResult(INFEASIBLE, None, math.inf)
        for v in range(n_nodes):
            if math.isfinite(dist[v]):
                phi[v] += min(dist[v], dist[T])
            else:
                phi[v] += dist[T]
        v = T
        while v != S:
            eid = par_edge[v]
            cap[eid] -= 1
            cap[eid ^ 1] += 1
            v = to[eid ^ 1]
        matched += 1

    pairs = []
    total = 0.0
    values = np.zeros(n * m)
    edge_id = 2 * n  # first row->col edge (after the n source edges)
    for r in range(n):
        for c in range(m):
            if finite[r, c]:
                if cap[edge_id] == 0:  # saturated forward edge
                    pairs.append((r, c))
                    total += float(C[r, c])
                    values[r * m + c] = 1.0
                edge_id += 2
    pairs.sort()
    return SolveResult(OPTIMAL, values, total, matched, pairs=pairs)


# ------------------------------------------------------------------ dumps

def format_lp(inst: IPInstance) -> str:
    """Human-readable instance dump; grammar documented in docs/lp_format.md."""
    names = inst.names or [f"x{j}" for j in range(inst.n_vars)]

    def terms(coeffs):
        parts = []
        for j, a in enumerate(coeffs):
            if a != 0.0:
                parts.append(f"{a:+g} {names[j]}")
        return " ".join(parts) if parts else "0"

    out = ["minimize", f"  {terms(inst.objective)}", "subject to"]
    for i, (coeffs, rel, rhs) in enumerate(inst.rows):
        out.append(f"  r{i}: {terms(coeffs)} {rel} {rhs:g}")
    out.append("bounds")
    for j in range(inst.n_vars):
        hi = "inf" if math.isinf(inst.upper[j]) else f"{inst.upper[j]:g}"
        out.append(f"  {inst.lower[j]:g} <= {names[j]} <= {hi}")
    ints = [names[j] for j in range(inst.n_vars) if inst.integral[j]]
    if ints:
        out.append("integers")
        out.append("  " + " ".join(ints))
    out.append("end")
    return "\n".join(out) + "\n"

"""Pure-Python pickup-and-delivery search kernel.

This is the reference twin of the compiled kernel in ``_pdpcore``; the two
must stay line-for-line equivalent.  Same loop structure, same floating-point
operation order, same explored-counter placement — the test suite compares
them bit-for-bit.  Keep any change mirrored in ``_pdpcore.pyx``.

Problem encoding (one "slot" per request, slots sorted by request id):

- ``has_pickup[j]`` = 0 for passengers already in the vehicle (dropoff only),
  1 for requests still to be picked up.
- ``ready[j]`` is the earliest pickup time; arriving early means waiting.
- Deadlines are inclusive.  ``t_star[j]`` is the ideal dropoff time; the
  route cost is the summed dropoff delay over all slots.

The search enumerates every valid interleaving of stops (pickup before
dropoff, capacity respected, deadlines kept) by depth-first search.  Children
are generated pickups-first in slot order, and a new best route must be
strictly cheaper, so the reported route is the lexicographically smallest
among minimum-cost ones — this is what makes the whole pipeline reproducible.

With ``prune=1`` a partial route is abandoned when some outstanding stop can
no longer be reached in time even by a direct drive.  Direct travel times are
lower bounds on any continuation, so pruning never changes the result, only
the amount of work; the feasible/cost/route outputs are identical either way.

``explored`` counts candidate stop evaluations (the counter increments before
the feasibility checks), identically in both modes, so pruned and unpruned
counts are directly comparable.
"""

from __future__ import annotations

import math

BACKEND = "python"


def search_best_route(
    tt,
    start_node,
    start_time,
    capacity,
    has_pickup,
    origins,
    dests,
    ready,
    wait_deadline,
    drop_deadline,
    t_star,
    prune,
):
    """Best feasible stop order for one vehicle and one set of slots.

    Returns ``(feasible, best_cost, best_seq, explored)`` where best_seq is a
    list of stop codes ``slot * 2 + kind`` (kind 0 = pickup, 1 = dropoff).
    """
    n = len(dests)
    total = n
    picked0 = 0
    occ0 = 0
    for j in range(n):
        if has_pickup[j]:
            total += 1
        else:
            picked0 |= 1 << j
            occ0 += 1
    if occ0 > capacity:
        return 0, math.inf, [], 0
    if n == 0:
        return 1, 0.0, [], 0

    all_dropped = (1 << n) - 1
    state = _State()
    seq = [0] * total
    _dfs(
        state, tt, capacity, has_pickup, origins, dests, ready,
        wait_deadline, drop_deadline, t_star, prune, total, n,
        all_dropped, seq, 0, start_node, start_time, occ0, picked0, 0, 0.0,
    )
    if state.best_cost == math.inf:
        return 0, math.inf, [], state.explored
    return 1, state.best_cost, state.best_seq, state.explored


class _State:
    __slots__ = ("best_cost", "best_seq", "explored")

    def __init__(self):
        self.best_cost = math.inf
        self.best_seq = []
        self.explored = 0


def _lookahead(
    tt, node, t2, picked, dropped, n, has_pickup, origins, dests,
    wait_deadline, drop_deadline,
):
    for j in range(n):
        if not (dropped >> j) & 1:
            if has_pickup[j] and not (picked >> j) & 1:
                if t2 + tt[node, origins[j]] > wait_deadline[j]:
                    return False
            if t2 + tt[node, dests[j]] > drop_deadline[j]:
                return False
    return True


def _dfs(
    state, tt, capacity, has_pickup, origins, dests, ready,
    wait_deadline, drop_deadline, t_star, prune, total, n,
    all_dropped, seq, depth, cur_node, cur_time, occ, picked, dropped, cost,
):
    if dropped == all_dropped:
        if cost < state.best_cost:
            state.best_cost = cost
            state.best_seq = seq[:depth]
        return
    for j in range(n):
        if has_pickup[j] and not (picked >> j) & 1:
            state.explored += 1
            t2 = cur_time + tt[cur_node, origins[j]]
            if t2 < ready[j]:
                t2 = ready[j]
            if t2 > wait_deadline[j]:
                continue
            if occ + 1 > capacity:
                continue
            if prune and not _lookahead(
                tt, origins[j], t2, picked | (1 << j), dropped, n,
                has_pickup, origins, dests, wait_deadline, drop_deadline,
            ):
                continue
            seq[depth] = j * 2
            _dfs(
                state, tt, capacity, has_pickup, origins, dests, ready,
                wait_deadline, drop_deadline, t_star, prune, total, n,
                all_dropped, seq, depth + 1, origins[j], t2, occ + 1,
                picked | (1 << j), dropped, cost,
            )
    for j in range(n):
        if (picked >> j) & 1 and not (dropped >> j) & 1:
            state.explored += 1
            t2 = cur_time + tt[cur_node, dests[j]]
            if t2 > drop_deadline[j]:
                continue
            if prune and not _lookahead(
                tt, dests[j], t2, picked, dropped | (1 << j), n,
                has_pickup, origins, dests, wait_deadline, drop_deadline,
            ):
                continue
            seq[depth] = j * 2 + 1
            _dfs(
                state, tt, capacity, has_pickup, origins, dests, ready,
                wait_deadline, drop_deadline, t_star, prune, total, n,
                all_dropped, seq, depth + 1, dests[j], t2, occ - 1,
                picked, dropped | (1 << j), cost + (t2 - t_star[j]),
            )

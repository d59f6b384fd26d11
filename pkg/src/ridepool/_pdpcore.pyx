# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled pickup-and-delivery search kernel.

Line-for-line twin of ``_pdp_py``: same loop structure, same floating-point
operation order, same explored-counter placement.  The test suite holds the
two to bit-identical outputs, so any change here must be mirrored there.
See _pdp_py for the full contract documentation.
"""

import numpy as np

from libc.math cimport INFINITY

BACKEND = "compiled"


cdef struct Ctx:
    double best_cost
    int best_len
    long long explored
    int n
    int capacity
    int prune
    unsigned long long all_dropped


cdef bint _lookahead(
    double[:, ::1] tt, Py_ssize_t node, double t2,
    unsigned long long picked, unsigned long long dropped, int n,
    unsigned char[::1] has_pickup, long long[::1] origins, long long[::1] dests,
    double[::1] wait_deadline, double[::1] drop_deadline,
) noexcept:
    cdef int j
    for j in range(n):
        if not (dropped >> j) & 1:
            if has_pickup[j] and not (picked >> j) & 1:
                if t2 + tt[node, origins[j]] > wait_deadline[j]:
                    return False
            if t2 + tt[node, dests[j]] > drop_deadline[j]:
                return False
    return True


cdef void _dfs(
    Ctx* ctx, double[:, ::1] tt,
    unsigned char[::1] has_pickup, long long[::1] origins, long long[::1] dests,
    double[::1] ready, double[::1] wait_deadline, double[::1] drop_deadline,
    double[::1] t_star, int[::1] seq, int[::1] best_seq,
    int depth, Py_ssize_t cur_node, double cur_time, int occ,
    unsigned long long picked, unsigned long long dropped, double cost,
) noexcept:
    cdef int j, i
    cdef double t2
    if dropped == ctx.all_dropped:
        if cost < ctx.best_cost:
            ctx.best_cost = cost
            ctx.best_len = depth
            for i in range(depth):
                best_seq[i] = seq[i]
        return
    for j in range(ctx.n):
        if has_pickup[j] and not (picked >> j) & 1:
            ctx.explored += 1
            t2 = cur_time + tt[cur_node, origins[j]]
            if t2 < ready[j]:
                t2 = ready[j]
            if t2 > wait_deadline[j]:
                continue
            if occ + 1 > ctx.capacity:
                continue
            if ctx.prune and not _lookahead(
                tt, origins[j], t2, picked | (<unsigned long long>1 << j), dropped,
                ctx.n, has_pickup, origins, dests, wait_deadline, drop_deadline,
            ):
                continue
            seq[depth] = j * 2
            _dfs(
                ctx, tt, has_pickup, origins, dests, ready, wait_deadline,
                drop_deadline, t_star, seq, best_seq,
                depth + 1, origins[j], t2, occ + 1,
                picked | (<unsigned long long>1 << j), dropped, cost,
            )
    for j in range(ctx.n):
        if (picked >> j) & 1 and not (dropped >> j) & 1:
            ctx.explored += 1
            t2 = cur_time + tt[cur_node, dests[j]]
            if t2 > drop_deadline[j]:
                continue
            if ctx.prune and not _lookahead(
                tt, dests[j], t2, picked, dropped | (<unsigned long long>1 << j),
                ctx.n, has_pickup, origins, dests, wait_deadline, drop_deadline,
            ):
                continue
            seq[depth] = j * 2 + 1
            _dfs(
                ctx, tt, has_pickup, origins, dests, ready, wait_deadline,
                drop_deadline, t_star, seq, best_seq,
                depth + 1, dests[j], t2, occ - 1,
                picked, dropped | (<unsigned long long>1 << j), cost + (t2 - t_star[j]),
            )


def search_best_route(
    tt, start_node, start_time, capacity,
    has_pickup, origins, dests, ready, wait_deadline, drop_deadline, t_star,
    prune,
):
    """See _pdp_py.search_best_route; identical contract and outputs."""
    cdef double[:, ::1] ttv = np.ascontiguousarray(tt, dtype=np.float64)
    cdef unsigned char[::1] hp = np.ascontiguousarray(has_pickup, dtype=np.uint8)
    cdef long long[::1] ov = np.ascontiguousarray(origins, dtype=np.int64)
    cdef long long[::1] dv = np.ascontiguousarray(dests, dtype=np.int64)
    cdef double[::1] rv = np.ascontiguousarray(ready, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(wait_deadline, dtype=np.float64)
    cdef double[::1] ddv = np.ascontiguousarray(drop_deadline, dtype=np.float64)
    cdef double[::1] tsv = np.ascontiguousarray(t_star, dtype=np.float64)

    cdef int n = dv.shape[0]
    cdef int total = n
    cdef unsigned long long picked0 = 0
    cdef int occ0 = 0
    cdef int j
    for j in range(n):
        if hp[j]:
            total += 1
        else:
            picked0 |= <unsigned long long>1 << j
            occ0 += 1
    if occ0 > <int>capacity:
        return 0, INFINITY, [], 0
    if n == 0:
        return 1, 0.0, [], 0

    seq_arr = np.zeros(total, dtype=np.int32)
    best_arr = np.zeros(total, dtype=np.int32)
    cdef int[::1] seq = seq_arr
    cdef int[::1] best_seq = best_arr

    cdef Ctx ctx
    ctx.best_cost = INFINITY
    ctx.best_len = 0
    ctx.explored = 0
    ctx.n = n
    ctx.capacity = <int>capacity
    ctx.prune = 1 if prune else 0
    ctx.all_dropped = (<unsigned long long>1 << n) - 1

    _dfs(
        &ctx, ttv, hp, ov, dv, rv, wv, ddv, tsv, seq, best_seq,
        0, <Py_ssize_t>start_node, <double>start_time, occ0, picked0, 0, 0.0,
    )
    if ctx.best_cost == INFINITY:
        return 0, INFINITY, [], ctx.explored
    return 1, ctx.best_cost, [int(best_arr[i]) for i in range(ctx.best_len)], ctx.explored

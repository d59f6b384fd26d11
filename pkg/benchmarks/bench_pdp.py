#!/usr/bin/env python3
"""Benchmark the compiled route-search kernel against the pure-Python twin.

Both backends answer every query in the corpus; the script refuses to print
timings unless the answers are bit-identical, so it doubles as a consistency
check.  Step counts (partial routes explored) are machine-independent;
wall-clock obviously is not.

Usage: python benchmarks/bench_pdp.py [--queries N] [--seed S]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from ridepool import pdp
from ridepool import _pdp_py
from ridepool.fleet import Request
from ridepool.pdp import PDPQuery, _encode
from ridepool.scenario import grid_network

try:
    from ridepool import _pdpcore
except ImportError:
    _pdpcore = None


def _near(rng, node, radius, side):
    r, c = divmod(node, side)
    rr = min(side - 1, max(0, r + int(rng.integers(-radius, radius + 1))))
    cc = min(side - 1, max(0, c + int(rng.integers(-radius, radius + 1))))
    return rr * side + cc


def make_corpus(net, n_queries, seed, side=15):
    """Queries with pickups near the start so searches go deep, not die early."""
    rng = np.random.default_rng(seed)
    tt = net.matrix()
    corpus = []
    for _ in range(n_queries):
        n_new = int(rng.integers(1, 5))
        n_onb = int(rng.integers(0, 3))
        start = int(rng.integers(0, net.n_nodes))
        reqs = []
        for rid in range(n_new + n_onb):
            o = _near(rng, start, 3, side)
            d = _near(rng, o, 8, side)
            while d == o:
                d = _near(rng, o, 8, side)
            reqs.append(Request(id=rid, origin=o, destination=d,
                                request_time=float(rng.integers(0, 60)),
                                direct_time=net.travel_time(o, d),
                                max_wait=300.0, max_delay=600.0))
        for r in reqs[n_new:]:
            r.mark_assigned(0)
            r.mark_onboard(r.request_time)
        q = PDPQuery(start_node=start,
                     start_time=float(rng.integers(0, 90)), capacity=4,
                     new_requests=reqs[:n_new], onboard_requests=reqs[n_new:])
        enc = _encode(q)
        corpus.append((tt, q.start_node, q.start_time, q.capacity) + tuple(enc[1:]))
    return corpus


def bench(kernel, corpus, prune):
    t0 = time.perf_counter()
    out = [kernel.search_best_route(*args, prune) for args in corpus]
    return time.perf_counter() - t0, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    net = grid_network(15, 15)
    corpus = make_corpus(net, args.queries, args.seed)
    print(f"corpus: {len(corpus)} queries on a {net.n_nodes}-node grid")
    print(f"active backend in this interpreter: {pdp.kernel_backend()}")

    backends = [("pure-python", _pdp_py)]
    if _pdpcore is not None:
        backends.insert(0, ("compiled", _pdpcore))
    else:
        print("compiled kernel not built; timing the pure backend only")

    results = {}
    for prune in (1, 0):
        mode = "pruned" if prune else "unpruned"
        times = {}
        for name, kernel in backends:
            dt, out = bench(kernel, corpus, prune)
            times[name] = dt
            results.setdefault(mode, {})[name] = out
        ref_name, ref = backends[0][0], results[mode][backends[0][0]]
        for name, _ in backends[1:]:
            got = results[mode][name]
            for i, (a, b) in enumerate(zip(ref, got)):
                if (a[0], a[1], list(a[2]), a[3]) != (b[0], b[1], list(b[2]), b[3]):
                    print(f"MISMATCH ({mode}, query {i}): {ref_name} vs {name}")
                    return 1
        line = f"{mode:>9}: " + "  ".join(
            f"{name} {dt:8.3f}s ({len(corpus)/dt:9.0f} q/s)"
            for name, dt in times.items())
        if len(times) == 2:
            line += f"  speedup x{times['pure-python']/times['compiled']:.1f}"
        print(line)
    explored = sum(r[3] for r in results["pruned"][backends[0][0]])
    explored_full = sum(r[3] for r in results["unpruned"][backends[0][0]])
    print(f"partial routes explored: pruned {explored}, unpruned {explored_full}"
          f" (ratio {explored/explored_full:.3f})")
    print("all backends agree on every query")
    return 0


if __name__ == "__main__":
    sys.exit(main())

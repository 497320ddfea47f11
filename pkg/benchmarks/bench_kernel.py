"""Compiled vs pure-Python search backend on the bundled 500-node graph.

    python benchmarks/bench_kernel.py [--queries 30] [--seed 1]

Each client routes the same random (sender, receiver, amount) queries on
both backends.  Reports wall time per backend and checks that both pick
identical routes.
"""

from __future__ import annotations

import argparse
import random
import sys
import time

from lnpathlab import kernel
from lnpathlab.routing import ALL_CLIENTS, find_route
from lnpathlab.sim import load_graph


def _queries(graph, n, seed):
    rnd = random.Random(seed)
    out = []
    while len(out) < n:
        a, b = rnd.sample(graph.nodes, 2)
        amt = int(10 ** rnd.uniform(3, 7)) * 1000
        out.append((a, b, amt))
    return out


def _run(graph, client, queries, backend):
    t0 = time.perf_counter()
    routes = [find_route(client, graph, a, b, amt, backend=backend) for a, b, amt in queries]
    return time.perf_counter() - t0, [None if r is None else r.edges for r in routes]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--graph", default="builtin:synthetic500")
    args = ap.parse_args(argv)

    if "compiled" not in kernel.available():
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1
    graph = load_graph(args.graph)
    queries = _queries(graph, args.queries, args.seed)
    print(f"{args.queries} queries per client on {args.graph}")
    print(f"{'client':<8} {'compiled s':>11} {'python s':>10} {'speedup':>8}  routes")
    tot_c = tot_p = 0.0
    mismatches = 0
    for client in ALL_CLIENTS:
        tc, rc = _run(graph, client, queries, "compiled")
        tp, rp = _run(graph, client, queries, "python")
        tot_c += tc
        tot_p += tp
        same = rc == rp
        mismatches += not same
        print(f"{client.value:<8} {tc:11.3f} {tp:10.3f} {tp / tc:7.1f}x  {'same' if same else 'DIFFER'}")
    print(f"{'total':<8} {tot_c:11.3f} {tot_p:10.3f} {tot_p / tot_c:7.1f}x")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())

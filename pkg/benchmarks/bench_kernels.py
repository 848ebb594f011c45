"""Time the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--walks N] [--time T] [--cut-n N]
"""

import argparse
import time

import numpy as np

from nowover import kernels
from nowover.graph import erdos_renyi


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vertices", type=int, default=400)
    ap.add_argument("--walks", type=int, default=20_000)
    ap.add_argument("--time", type=float, default=32.0)
    ap.add_argument("--cut-n", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    g = erdos_renyi(args.vertices, 8.0 / args.vertices, rng)
    packed = g.packed()
    n = len(packed.vertices)
    weight = np.ones(n)
    stop = np.zeros(n, np.bool_)
    starts = rng.integers(0, n, args.walks)

    small = erdos_renyi(args.cut_n, 0.4, rng)
    eu, ev, em = (np.array(c, np.int64) for c in zip(*small.edges()))

    backends = ["numpy"]
    if kernels.numba_available():
        backends.insert(0, "numba")
    else:
        print("numba not installed, timing the numpy fallback only")

    rows = []
    for name in backends:
        k = kernels.get_backend(name)
        walk = lambda: k.walk_endpoints(packed.nbr, packed.deg, weight, stop, starts, args.time, 7)
        cut = lambda: k.cut_table(args.cut_n, eu, ev, em)
        walk()  # compile / warm caches
        cut()
        rows.append((name, _best(walk, args.repeat), _best(cut, args.repeat)))

    print(f"walk_endpoints: {args.walks} walks, T={args.time}, {n} vertices")
    print(f"cut_table: n={args.cut_n} ({1 << args.cut_n} masks, {em.size} edges)")
    print(f"{'backend':<8} {'walks [s]':>10} {'cuts [s]':>10}")
    for name, tw, tc in rows:
        print(f"{name:<8} {tw:>10.4f} {tc:>10.4f}")
    if len(rows) == 2:
        print(f"speedup  {rows[1][1] / rows[0][1]:>10.1f}x {rows[1][2] / rows[0][2]:>10.1f}x")


if __name__ == "__main__":
    main()

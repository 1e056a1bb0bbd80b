"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--sizes 500 2000 4000] [--repeat 3]

Each kernel is warmed up once (so numba compile time is excluded) and the
best of ``--repeat`` timings is reported, along with an agreement check.
The whole pipeline can be forced onto the numpy path with FRAMEDISC_JIT=0.
"""

import argparse
import time

import numpy as np

from framedisc import kernels
from framedisc.kernels import EUCLIDEAN, HYPERBOLIC


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    P = rng.uniform(-4, 4, (n, 2))
    Ph = np.column_stack([rng.uniform(-2, 2, n), np.exp(rng.uniform(-1, 1, n))])
    X = rng.standard_normal((n, 16)) + 1j * rng.standard_normal((n, 16))
    cells = rng.integers(0, max(n // 50, 1), n)
    return {
        "greedy_net": lambda jit: kernels.greedy_net_indices(EUCLIDEAN, P, 0.2, jit=jit),
        "assign_nearest": lambda jit: kernels.assign_nearest(EUCLIDEAN, P, P[: n // 10], jit=jit)[0],
        "crowding/hyp": lambda jit: kernels.crowding(HYPERBOLIC, Ph, 0.3, jit=jit),
        "separation/hyp": lambda jit: kernels.min_separation(HYPERBOLIC, Ph, jit=jit),
        "pair_close": lambda jit: kernels.pair_close(EUCLIDEAN, P, 0.3, jit=jit),
        "image_clusters": lambda jit: kernels.image_clusters(X, cells, 4.0, jit=jit),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 4000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>7}{'numba s':>12}{'numpy s':>12}{'speedup':>10}  agree")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            agree = np.array_equal(np.asarray(fn(True)), np.asarray(fn(False)))
            t_nb = best_time(lambda: fn(True), args.repeat)
            t_np = best_time(lambda: fn(False), args.repeat)
            print(f"{name:<16}{n:>7}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>10.1f}  {agree}")


if __name__ == "__main__":
    main()

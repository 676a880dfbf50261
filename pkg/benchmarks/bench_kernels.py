"""Throughput comparison of the numba and numpy nearest-neighbor kernels.

Usage:
    python benchmarks/bench_kernels.py [--sizes 1000 4000 10000] [--dims 8]

The opposite-arm nearest-neighbor search dominates the matching-based
imputation metric (O(n^2 * k) distances).  Everything else in the package
is BLAS-bound linear algebra, so this is the one kernel carrying a compiled
fast path.  Set HTESELECT_NO_NUMBA=1 to force the numpy path package-wide.
"""

import argparse
import time

import numpy as np

from hteselect import _kernels


def time_path(x, t, force, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = _kernels.nn_opposite_arm(x, t, force=force)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 4000, 10000])
    parser.add_argument("--dims", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba unavailable (or disabled via HTESELECT_NO_NUMBA); "
              "only the numpy path can run")

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>8} {'k':>4} {'numpy (s)':>12} {'numba (s)':>12} {'speedup':>9}  match")
    for n in args.sizes:
        x = rng.normal(size=(n, args.dims))
        t = rng.random(n) < 0.5
        t_np, out_np = time_path(x, t, "numpy")
        if _kernels.HAS_NUMBA:
            _kernels.nn_opposite_arm(x[:64], t[:64], force="numba")  # compile
            t_nb, out_nb = time_path(x, t, "numba")
            match = bool(np.array_equal(out_np, out_nb))
            print(f"{n:>8} {args.dims:>4} {t_np:>12.4f} {t_nb:>12.4f} "
                  f"{t_np / t_nb:>8.1f}x  {match}")
        else:
            print(f"{n:>8} {args.dims:>4} {t_np:>12.4f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()

"""Compiled vs numpy polynomial kernels on a degree-10 curvature field.

Run with ``python3 benchmarks/bench_kernels.py [--points N] [--repeat R]``.
The first compiled call is made before timing so JIT cost is excluded.
"""

import argparse
import timeit

import numpy as np

from paneitz_lab import _kernels
from paneitz_lab.morse_analyzer import CurvatureField
from paneitz_lab.sphere_geometry import random_points


def bench_field():
    b = [0.5, 0.25, -0.2, 0.1, -0.05, 0.15, -0.3]
    terms = [([10, 0, 0, 0, 0, 0, 0], 1.0), ([1, 0, 0, 0, 0, 0, 0], 0.1), ([0] * 7, 1.5),
             ([2, 3, 0, 1, 0, 0, 2], 0.02), ([0, 0, 4, 0, 2, 1, 0], -0.03)]
    for k, c in enumerate(b):
        e = [0] * 7
        e[k] = 2
        terms.append((e, c))
    return CurvatureField.from_terms(6, terms)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.USE_NUMBA:
        raise SystemExit("numba is disabled (PANEITZ_LAB_DISABLE_NUMBA); nothing to compare")
    K = bench_field()
    X = random_points(6, args.points, np.random.default_rng(0))
    print(f"{args.points} points, {K.exps.shape[0]} monomials, best of {args.repeat}")
    print(f"{'kernel':8s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name in ("value", "grad", "hess"):
        ref = getattr(_kernels, f"poly_{name}_numpy")
        fast = getattr(_kernels, f"poly_{name}_numba")
        diff = float(np.max(np.abs(fast(K.exps, K.coeffs, X) - ref(K.exps, K.coeffs, X))))
        t_ref = min(timeit.repeat(lambda: ref(K.exps, K.coeffs, X), number=1, repeat=args.repeat))
        t_fast = min(timeit.repeat(lambda: fast(K.exps, K.coeffs, X), number=1,
                                   repeat=args.repeat))
        print(f"{name:8s} {1e3 * t_ref:12.2f} {1e3 * t_fast:12.2f} {t_ref / t_fast:8.1f} "
              f"{diff:10.1e}")


if __name__ == "__main__":
    main()

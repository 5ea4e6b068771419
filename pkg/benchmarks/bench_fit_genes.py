"""Benchmark the per-gene weighted regression kernel: compiled vs python.

Run:  python3 benchmarks/bench_fit_genes.py [--reps 5]

The two implementations share one contract, so this also double-checks that
their results agree on the benchmark inputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ruvgamma import _gammafit_py

try:
    from ruvgamma import _gammafit
except ImportError:
    _gammafit = None


def make_problem(n: int, p: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    z = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))])
    eta = rng.normal(size=(p, d))
    y = eta @ z.T + rng.normal(size=(p, n))
    # a squad of contaminated genes keeps the weight machinery honest
    y[: p // 20, : max(2, n // 20)] += 25.0
    return np.ascontiguousarray(y), z


def run_once(mod, y, z, gamma=0.5, max_iter=200, tol=1e-8):
    t0 = time.perf_counter()
    out = mod.fit_genes(y, z, gamma, max_iter, tol)
    return time.perf_counter() - t0, out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    sizes = [(100, 1000, 10), (100, 5000, 10), (500, 1000, 10), (100, 1000, 4)]
    print(f"{'n':>5} {'p':>6} {'d':>3} {'python (s)':>11} {'compiled (s)':>13} {'speedup':>8}")
    for n, p, d in sizes:
        y, z = make_problem(n, p, d)
        t_py = min(run_once(_gammafit_py, y, z)[0] for _ in range(args.reps))
        if _gammafit is None:
            print(f"{n:>5} {p:>6} {d:>3} {t_py:>11.4f} {'unavailable':>13} {'-':>8}")
            continue
        t_cy = min(run_once(_gammafit, y, z)[0] for _ in range(args.reps))
        a = run_once(_gammafit_py, y, z)[1]
        b = run_once(_gammafit, y, z)[1]
        for x, w in zip(a, b):
            np.testing.assert_allclose(x, w, rtol=1e-9, atol=1e-12)
        print(f"{n:>5} {p:>6} {d:>3} {t_py:>11.4f} {t_cy:>13.4f} {t_py / t_cy:>8.2f}")


if __name__ == "__main__":
    main()

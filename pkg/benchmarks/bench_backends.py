#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the per-call cost of each hot kernel on representative sizes
(the closed-loop acceptance scenarios use n = 2, m = 1), plus an
end-to-end closed-loop run on whichever backend is active.

Usage:
    python3 benchmarks/bench_backends.py [--steps 2000]
"""

import argparse
import time

import numpy as np

from safelearn import BACKEND
from safelearn._core import py_kernels

try:
    from safelearn._core import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args, repeat=2000, setup=None):
    best = float("inf")
    for _ in range(3):
        state = setup() if setup else None
        t0 = time.perf_counter()
        for _ in range(repeat):
            if setup:
                fn(*args, state)
            else:
                fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best * 1e6  # microseconds


def bench_kernels(d=3, n=2, m=1):
    rng = np.random.default_rng(0)
    M = rng.normal(size=(d, d))
    V0 = M @ M.T + np.eye(d)
    L0 = np.linalg.cholesky(V0)
    z = rng.normal(size=d)
    y = rng.normal(size=n)
    S0 = rng.normal(size=(d, n))
    theta0 = np.zeros((d, n))
    x = rng.normal(size=n)
    verts = np.array([[-2.0], [2.0]])
    G = np.vstack([rng.normal(size=(4, m)), np.eye(m), -np.eye(m)])
    g = np.concatenate([G[:4] @ np.zeros(m) + 0.5, np.full(2 * m, 2.0)])
    ubar = np.array([1.8])

    backends = [("python", py_kernels)]
    if _ckernels is not None:
        backends.append(("cython", _ckernels))

    rows = []

    def bench(name, call):
        cells = [name]
        for _, kern in backends:
            cells.append(f"{call(kern):9.2f}")
        rows.append(cells)

    bench("chol_rank1_update(d=3)",
          lambda k: timeit(lambda st: k.chol_rank1_update(st[0], st[1]),
                           setup=lambda: (L0.copy(), z.copy()), repeat=500))
    bench("chol_solve(d=3, nrhs=2)",
          lambda k: timeit(k.chol_solve, L0, S0))
    bench("estimator_absorb(d=3)",
          lambda k: timeit(lambda st: k.estimator_absorb(st[0], st[1], st[2],
                                                         st[3], st[4], st[5]),
                           setup=lambda: (L0.copy(), V0.copy(), S0.copy(),
                                          theta0.copy(), z.copy(), y.copy()),
                           repeat=500))
    bench("zeta_max(d=3, 2 verts)",
          lambda k: timeit(k.zeta_max, L0, x, verts))
    bench("qp_project(p=6, m=1)",
          lambda k: timeit(k.qp_project, G, g, ubar))

    header = ["kernel (µs/call)"] + [name for name, _ in backends]
    if len(backends) == 2:
        header.append("speedup")
        for row in rows:
            row.append(f"{float(row[1]) / float(row[2]):6.1f}x")
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))


def bench_closed_loop(steps):
    from safelearn import (Box, ConfidenceConfig, LtiModel, NoiseSpec,
                           SafetySpec, Scenario, run_closed_loop)

    sc = Scenario(
        model=LtiModel(A=[[0.9, 0.1], [0.0, 0.8]], B=[[0.0], [1.0]]),
        noise=NoiseSpec(W=0.01 * np.eye(2), r=0.01),
        x0=np.zeros(2),
        conf=ConfidenceConfig(r=0.01, s=2.0, lam=1.0, delta=0.2, n=2, m=1),
        safety=SafetySpec.constant(
            np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
            np.array([5.0, 5.0, 5.0, 5.0]), Box([-2.0], [2.0])),
        policy_kind="constant", policy_value=np.array([2.0]),
        excitation_kind="uniform_dither", excitation_param=0.5,
        horizon=steps,
    )
    t0 = time.perf_counter()
    run_closed_loop(sc, 1)
    dt = time.perf_counter() - t0
    print(f"\nclosed loop ({BACKEND} backend): {steps} steps in {dt:.2f} s "
          f"({dt / steps * 1e6:.0f} µs/step)")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2000,
                        help="closed-loop benchmark length")
    args = parser.parse_args()
    if _ckernels is None:
        print("note: compiled backend not built; benchmarking the fallback only")
    bench_kernels()
    bench_closed_loop(args.steps)


if __name__ == "__main__":
    main()

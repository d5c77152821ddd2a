#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Runs each hot kernel in both variants on representative problem sizes and
prints a timing table.  Requires numba (run under the default backend);
the numpy column is what DYN_NN_LAB_BACKEND=numpy would execute.
"""

import argparse
import time

import numpy as np

from dyn_nn_lab import kernels
from dyn_nn_lab.backend import HAS_NUMBA
from dyn_nn_lab.numerics import SeededRng


def timeit(fn, args, repeats, copy_idx=None):
    best = float("inf")
    for rep in range(repeats + 1):
        call_args = list(args)
        if copy_idx is not None:
            call_args[copy_idx] = np.array(args[copy_idx], copy=True)
        t0 = time.perf_counter()
        fn(*call_args)
        if rep > 0:  # first call is warmup (page faults, BLAS threads, JIT)
            best = min(best, time.perf_counter() - t0)
    return best


def bench_kuramoto(repeats):
    gen = SeededRng(1).gen
    rows = []
    for m in (200, 800, 3200):
        w = np.ascontiguousarray(gen.normal(size=(m, m)))
        x = gen.uniform(0, 2 * np.pi, m)
        omega = gen.normal(size=m)
        kernels.kuramoto_drift_numba(w, x, omega)  # compile
        t_nb = timeit(kernels.kuramoto_drift_numba, (w, x, omega), repeats)
        t_np = timeit(kernels.kuramoto_drift_numpy, (w, x, omega), repeats)
        rows.append((f"kuramoto_drift M={m}", t_nb, t_np))
    # context: the literal per-pair loop both backends replaced
    m = 800
    w = np.ascontiguousarray(gen.normal(size=(m, m)))
    x = gen.uniform(0, 2 * np.pi, m)
    omega = gen.normal(size=m)
    t_ref = timeit(kernels.kuramoto_drift_numba, (w, x, omega), repeats)
    t_pair = timeit(kernels.kuramoto_drift_pairwise, (w, x, omega), 1)
    rows.append((f"  (literal pairwise loop M={m})", t_ref, t_pair))
    return rows


def bench_glauber(repeats):
    gen = SeededRng(2).gen
    m = 8
    a = gen.normal(size=(m, m))
    a = a + a.T
    np.fill_diagonal(a, 0.0)
    b = gen.normal(size=m)
    steps = 200_000
    sites = gen.integers(m, size=steps).astype(np.int64)
    unifs = gen.random(steps)

    def run(fn):
        v = np.zeros(m)
        counts = np.zeros(2 ** m, dtype=np.int64)
        fn(a, b, v, sites, unifs, -1.0, 1000, counts)

    run(kernels.glauber_chain_numba)  # compile
    t_nb = timeit(lambda: run(kernels.glauber_chain_numba), (), repeats)
    t_np = timeit(lambda: run(kernels.glauber_chain_numpy), (), repeats)
    return [(f"glauber_chain M={m} steps={steps}", t_nb, t_np)]


def bench_vlasov(repeats):
    n = 512
    dx = 2 * np.pi / n
    xc = (np.arange(n) + 0.5) * dx
    xf = (np.arange(n) + 1.0) * dx
    u0 = (1.0 + np.cos(xc - np.pi)) / (2 * np.pi)
    args_tail = (np.array([0.0]), np.array([1.0]), 1.0, dx, 0.002, 500,
                 np.sin(xc), np.cos(xc), np.sin(xf), np.cos(xf))
    u = np.array([u0])
    kernels.vlasov_run_numba(u.copy(), *args_tail)  # compile
    t_nb = timeit(kernels.vlasov_run_numba, (u, *args_tail), repeats, copy_idx=0)
    t_np = timeit(kernels.vlasov_run_numpy, (u, *args_tail), repeats, copy_idx=0)
    return [(f"vlasov_run n={n} steps=500", t_nb, t_np)]


def bench_lyapunov(repeats):
    gen = SeededRng(3).gen
    mats = gen.normal(size=(4, 4, 4))
    idx = gen.integers(4, size=20_000).astype(np.int64)
    q0, _ = np.linalg.qr(gen.normal(size=(4, 4)))
    kernels.lyapunov_qr_logs_numba(mats, idx[:10], q0)  # compile
    t_nb = timeit(kernels.lyapunov_qr_logs_numba, (mats, idx, q0), repeats)
    t_np = timeit(kernels.lyapunov_qr_logs_numpy, (mats, idx, q0), repeats)
    return [("lyapunov_qr k=4 steps=20000", t_nb, t_np)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba backend inactive; unset DYN_NN_LAB_BACKEND "
                         "and install numba to benchmark both paths")
    rows = []
    rows += bench_kuramoto(args.repeats)
    rows += bench_glauber(args.repeats)
    rows += bench_vlasov(args.repeats)
    rows += bench_lyapunov(args.repeats)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for name, t_nb, t_np in rows:
        print(f"{name:<{width}}  {t_nb * 1e3:>8.2f}ms  {t_np * 1e3:>8.2f}ms  "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Monte Carlo backend benchmark: numba JIT loop vs vectorized numpy.

Both backends consume identical counter-based streams, so their ensemble
means must agree to float roundoff; the benchmark asserts that before
reporting timings.  The first numba call pays JIT compilation, timed
separately.  Run from the repo root:

    python3 benchmarks/bench_mc.py [--n-traj 200000] [--t-max 50]
"""
import argparse
import time

import numpy as np

from telegraphq.bloch import TssParams
from telegraphq.mc_kernels import mc_average, numba_available
from telegraphq.noise import Biexponential, Exponential, NoiseModel

CASES = [
    ("exponential K=2, unbiased", TssParams(0.0, 1.0), NoiseModel(1.0, Exponential(2.0))),
    ("biexponential, biased", TssParams(1.0, 1.0), NoiseModel(0.25, Biexponential(0.5, 0.05, 1.0))),
]


def run(backend, tss, noise, p0, ts, n_traj, seed):
    t0 = time.perf_counter()
    mean, err, used = mc_average(tss, noise, p0, ts, n_traj, seed, backend=backend)
    return mean, err, used, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=200_000)
    ap.add_argument("--t-max", type=float, default=50.0)
    ap.add_argument("--dt", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    ts = np.arange(int(round(args.t_max / args.dt)) + 1) * args.dt
    p0 = np.array([0.0, 0.0, 1.0])

    if not numba_available():
        print("numba unavailable (or disabled via TELEGRAPHQ_DISABLE_NUMBA); "
              "benchmarking the numpy backend only\n")

    for label, tss, noise in CASES:
        print(f"== {label}: {args.n_traj} trajectories, t_max={args.t_max}, dt={args.dt}")
        m_np, _, _, t_np = run("numpy", tss, noise, p0, ts, args.n_traj, args.seed)
        rate = args.n_traj / t_np
        print(f"   numpy   {t_np:8.2f} s   ({rate:,.0f} traj/s)")
        if numba_available():
            # warm-up on a small ensemble so JIT cost is reported, not mixed in
            t0 = time.perf_counter()
            mc_average(tss, noise, p0, ts[:2], 128, args.seed, backend="numba")
            t_jit = time.perf_counter() - t0
            m_nb, _, _, t_nb = run("numba", tss, noise, p0, ts, args.n_traj, args.seed)
            dev = float(np.abs(m_nb - m_np).max())
            assert dev <= 1e-13, f"backend means diverged: {dev:.3e}"
            rate = args.n_traj / t_nb
            print(f"   numba   {t_nb:8.2f} s   ({rate:,.0f} traj/s)"
                  f"   [jit warm-up {t_jit:.2f} s]")
            print(f"   speedup {t_np / t_nb:6.1f}x   max |mean diff| {dev:.2e}")
        print()


if __name__ == "__main__":
    main()

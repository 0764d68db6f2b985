"""Numba versus pure-numpy timings for the three hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are imported from the same module, so the comparison does not
depend on CONTRACTION_CERT_BACKEND. Results are also checked for agreement.
"""
import argparse
import time

import numpy as np

from contraction_cert import kernels
from contraction_cert._backend import HAVE_NUMBA


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_step(rng, repeat, n=200000, d=5):
    xh = rng.normal(size=(n, d))
    yh = xh + 0.05 * rng.normal(size=(n, d))
    Z = rng.normal(size=(n, d))
    U = rng.random(n)
    t_np = best_of(lambda: kernels._coupled_step_np(xh, yh, Z, U, 0.03), repeat)
    if not HAVE_NUMBA:
        return t_np, None, True
    xn, yn = np.empty_like(xh), np.empty_like(yh)
    coal = np.empty(n, dtype=np.bool_)
    t_nb = best_of(lambda: kernels._coupled_step_nb(xh, yh, Z, U, 0.03, xn, yn, coal), repeat)
    ref = kernels._coupled_step_np(xh, yh, Z, U, 0.03)
    ok = np.allclose(ref[0], xn, atol=1e-14) and np.allclose(ref[1], yn, atol=1e-12) and np.array_equal(ref[2], coal)
    return t_np, t_nb, ok


def bench_moment(rng, repeat, n=20000):
    sd = 0.03
    r = np.abs(rng.normal(size=n)) * 0.2
    rh = r * (1 + 0.01 * rng.normal(size=n))
    t_np = best_of(lambda: kernels._clipped_moment_np(r, rh, sd, 3, sd, sd), repeat)
    if not HAVE_NUMBA:
        return t_np, None, True
    out = np.empty(n)
    t_nb = best_of(lambda: kernels._clipped_moment_nb(r, rh, sd, 3, sd, sd, kernels._GL_X, kernels._GL_W, out), repeat)
    ok = np.allclose(out, kernels._clipped_moment_np(r, rh, sd, 3, sd, sd), rtol=1e-12, atol=1e-18)
    return t_np, t_nb, ok


def bench_assign(rng, repeat, n=400):
    C = rng.random((n, n))
    t_np = best_of(lambda: kernels._assign_np(C), repeat)
    if not HAVE_NUMBA:
        return t_np, None, True
    col = np.empty(n, dtype=np.int64)
    t_nb = best_of(lambda: kernels._assign_nb(C, col), repeat)
    idx = np.arange(n)
    ok = C[idx, col].sum() == C[idx, kernels._assign_np(C)].sum()
    return t_np, t_nb, ok


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print("%-22s %12s %12s %9s %6s" % ("kernel", "numpy [s]", "numba [s]", "speedup", "agree"))
    for name, fn in (("coupled_gauss_step", bench_step), ("clipped_moment", bench_moment), ("assign", bench_assign)):
        t_np, t_nb, ok = fn(rng, args.repeat)
        if t_nb is None:
            print("%-22s %12.4f %12s %9s %6s" % (name, t_np, "n/a", "n/a", ok))
        else:
            print("%-22s %12.4f %12.4f %8.1fx %6s" % (name, t_np, t_nb, t_np / t_nb, ok))


if __name__ == "__main__":
    main()

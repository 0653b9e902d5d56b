"""Benchmark the compiled recursion kernels against the numpy fallback.

Runs the two hot kernels (single-system state recursion, batched
empirical-loss evaluation) at pipeline-realistic sizes with both
implementations and prints the timings and speedups.  Results from the
two backends are also cross-checked for agreement.

Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from ltibound import _kernels_py
from ltibound import kernels

try:
    from ltibound import _kernels
except ImportError:
    _kernels = None


def timeit(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def stable(rng, shape, radius=0.6):
    A = rng.standard_normal(shape)
    rho = np.max(np.abs(np.linalg.eigvals(A)), axis=-1)
    return A * (radius / rho)[..., None, None]


def bench_state_recursion(rng):
    n, p, N = 4, 2, 1_000_000
    A = stable(rng, (1, n, n))[0]
    B = rng.standard_normal((n, p))
    U = rng.standard_normal((N, p))
    x0 = rng.standard_normal(n)
    rows = []
    t_py, X_py = timeit(_kernels_py.state_recursion, A, B, U, x0)
    rows.append(("python", t_py))
    if _kernels is not None:
        t_c, X_c = timeit(_kernels.state_recursion, A, B, U, x0)
        rows.append(("compiled", t_c))
        assert np.allclose(X_py, X_c, rtol=1e-12, atol=1e-12)
    report("state_recursion (n=4, 1e6 steps)", rows)


def bench_batch_mse(rng):
    nb, nh, p, q, N = 2000, 2, 2, 1, 1000
    As = stable(rng, (nb, nh, nh))
    Bs = rng.standard_normal((nb, nh, p))
    Cs = rng.standard_normal((nb, q, nh))
    Ds = rng.standard_normal((nb, q, p))
    W = rng.standard_normal((N, p))
    Y = rng.standard_normal((N, q))
    rows = []
    t_py, L_py = timeit(_kernels_py.batch_mse, As, Bs, Cs, Ds, W, Y)
    rows.append(("python", t_py))
    if _kernels is not None:
        t_c, L_c = timeit(_kernels.batch_mse, As, Bs, Cs, Ds, W, Y)
        rows.append(("compiled", t_c))
        assert np.allclose(L_py, L_c, rtol=1e-10, atol=1e-12)
    report("batch_mse (2000 systems, n=2, 1000 steps)", rows)


def report(name, rows):
    print(name)
    base = rows[0][1]
    for label, t in rows:
        extra = "" if t == base else f"  ({base / t:.1f}x vs python)"
        print(f"  {label:9s} {t * 1e3:9.2f} ms{extra}")
    print()


def main():
    print(f"active backend: {kernels.BACKEND}")
    if _kernels is None:
        print("compiled extension not built; timing the fallback only\n")
    else:
        print()
    rng = np.random.default_rng(0)
    bench_state_recursion(rng)
    bench_batch_mse(rng)


if __name__ == "__main__":
    main()

"""Compiled vs numpy predictor-corrector step.

    python benchmarks/bench_kernels.py [--repeat N]

Times the bare kernel on random packs of several sizes, then a short
certified-regime tail solve with each backend swapped in.
"""
import argparse
import time
import timeit

import numpy as np

from gcflow import _kernels_py, kernels
from gcflow.geometry import solve_gauss_equation
from gcflow.hyperbolic import ChartCoefficients, solve_cauchy
from gcflow.profiles import CurvatureProfile, Modulation

try:
    from gcflow import _ckernels
except ImportError:
    _ckernels = None


def random_args(n, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(-1, 1, n)
    s = r - rng.uniform(0.1, 1, n)
    D0, D1 = rng.normal(size=(10, n)), rng.normal(size=(10, n))
    D0[0] = D1[0] = rng.uniform(0.5, 2, n)
    E = np.zeros((2, n))
    return r, s, rng.normal(size=n), rng.normal(size=n), D0, D1, E, E


def bench_step(backends, sizes, repeat):
    print(f"{'cells':>7} " + " ".join(f"{name:>12}" for name in backends) + "   speedup")
    for n in sizes:
        args = random_args(n)
        number = max(1, 200_000 // n)
        times = {}
        for name, fn in backends.items():
            best = min(timeit.repeat(lambda: fn(*args, 1e-3, 0.01, True, True),
                                     number=number, repeat=repeat))
            times[name] = best / number
        cells = " ".join(f"{times[name] * 1e6:10.1f}us" for name in backends)
        ratio = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:7d} {cells}   {ratio:6.1f}x")


def bench_solve(backends, nx=128, span=20.0):
    p = CurvatureProfile.log_example(modulation=Modulation("sine", 0.2, 1.0))
    t0 = 49.0
    xs = np.arange(nx) * 2 * np.pi / nx
    metric = solve_gauss_equation(p, xs, np.arange(0.0, t0 + span + 0.5, 0.1), dt_sub=0.02,
                                  periodic_x=True)
    co = ChartCoefficients(p, metric)
    saved = kernels.pc_step
    results = {}
    try:
        for name, fn in backends.items():
            kernels.pc_step = fn
            start = time.perf_counter()
            F = solve_cauchy(0.0075, -0.0075 + 0.002 * np.sin(xs), xs, co, (t0, t0 + span),
                             dt_max=0.05 * 64 / nx, tilde=True)
            results[name] = (time.perf_counter() - start, F.r[-1])
    finally:
        kernels.pc_step = saved
    for name, (sec, _) in results.items():
        print(f"solve nx={nx} span={span:g}: {name:>7} {sec:7.3f}s")
    if len(results) == 2:
        diff = np.max(np.abs(results["numpy"][1] - results["cython"][1]))
        print(f"max |r_numpy - r_cython| at the end: {diff:.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"numpy": _kernels_py.pc_step}
    if _ckernels is not None:
        backends["cython"] = _ckernels.pc_step
    else:
        print("compiled kernel not built; timing the numpy fallback only")
    bench_step(backends, (64, 256, 1024, 4096, 16384), args.repeat)
    bench_solve(backends)


if __name__ == "__main__":
    main()

"""Compare the compiled barrier kernel with the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 6 24 96] [--repeat 200]

Times one gradient+Hessian evaluation, then a full solve of a random
downlink-shaped problem under each backend.
"""

import argparse
import time

import numpy as np

from mumimo.solver import ConvexProblem, _kernels_py, barrier, solve
from mumimo.solver import kernels


def _problem(n, rng):
    n_groups = max(1, n // 4)
    group = np.sort(np.arange(n) % n_groups).astype(np.intp)
    A = np.vstack([np.ones(n), rng.uniform(0.0, 1.0, (8, n))])
    b = np.concatenate([[20.0], rng.uniform(2.0, 6.0, 8)])
    coef = 10 ** rng.uniform(-1, 1.5, n)
    return ConvexProblem(coef, group, np.zeros(n), 1020.0 / coef, A, b)


def _time(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[6, 24, 96])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    try:
        from mumimo.solver import _kernels as compiled
    except ImportError:
        compiled = None
        print("compiled kernel unavailable; timing the fallback only")
    backends = {"python": _kernels_py.barrier_eval}
    if compiled is not None:
        backends["cython"] = compiled.barrier_eval

    rng = np.random.default_rng(0)
    print(f"{'n':>5} {'backend':>8} {'eval us':>10} {'solve ms':>10}")
    for n in args.sizes:
        p = _problem(n, rng)
        y = np.full(n, 0.01)
        A = np.ascontiguousarray(p.A / p.b[:, None])
        sl, su, sr = y.copy(), np.full(n, np.inf), 1.0 - A @ y
        g, h = np.empty(n), np.empty((n, n))
        for name, fn in backends.items():
            t_eval = _time(lambda: fn(y, p.coef, p.group, p.n_groups, sl, su, sr, A, 0.1, g, h),
                           args.repeat)
            barrier.kernels.barrier_eval = fn
            t_solve = _time(lambda: solve(p), max(1, args.repeat // 20))
            print(f"{n:5d} {name:>8} {t_eval * 1e6:10.1f} {t_solve * 1e3:10.2f}")
    barrier.kernels.barrier_eval = kernels.barrier_eval


if __name__ == "__main__":
    main()

"""Time the compiled kernels against the pure-NumPy fallback.

Runs both backends in-process on identical inputs and reports the best
wall time over a few repeats, plus the speedup. Problem sizes default to
the desk-scale recovery setting (12 subjects, 12 trials, 101 steps).

Usage:
    python3 benchmarks/bench_backends.py [--subjects I] [--trials J]
                                         [--steps N] [--repeats R]
"""

import argparse
import time

import numpy as np

from mtssm import _kernels_py
from mtssm.likelihood import QuadratureRule

try:
    from mtssm import _kernels_c
except ImportError:
    _kernels_c = None


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--subjects", type=int, default=12)
    ap.add_argument("--trials", type=int, default=12)
    ap.add_argument("--steps", type=int, default=101)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    opts = ap.parse_args()

    rng = np.random.default_rng(opts.seed)
    I, J, N = opts.subjects, opts.trials, opts.steps
    usum = rng.integers(0, J + 1, size=(I, N)).astype(float)
    beta = rng.normal(0.0, 2.0, size=J)
    F1 = rng.uniform(0.05, 2.0, size=(I, J, N))
    F2 = rng.uniform(0.05, 2.0, size=(I, J, N))
    quad = QuadratureRule.gauss_hermite(32)
    pm, pv, _, _, _, _ = _kernels_py.filter_pass(usum, beta, 1.0)

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("compiled", _kernels_c))
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"problem: I={I} J={J} N={N}, M=32, best of {opts.repeats}")
    results = {}
    for name, mod in backends:
        t_filter = bench(mod.filter_pass, (usum, beta, 1.0), opts.repeats)
        t_loglik = bench(mod.loglik_terms,
                         (F1, F2, beta, pm, pv, quad.nodes, quad.weights),
                         opts.repeats)
        results[name] = (t_filter, t_loglik)
        print(f"{name:>9}: filter_pass {t_filter * 1e3:8.3f} ms   "
              f"loglik_terms {t_loglik * 1e3:8.3f} ms")
    if len(results) == 2:
        sf = results["python"][0] / results["compiled"][0]
        sl = results["python"][1] / results["compiled"][1]
        print(f"{'speedup':>9}: filter_pass {sf:8.1f}x    loglik_terms {sl:8.1f}x")


if __name__ == "__main__":
    main()

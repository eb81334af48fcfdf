"""Benchmark the numba kernel builds against the pure-numpy fallbacks.

Runs each hot kernel in both variants on identical inputs, checks that the
results agree, and prints per-kernel timings.  Usage::

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from skewfl import _backend, _kernels


def time_call(fn, *args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pairwise(repeats):
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(300, 512))
    a = _kernels.pairwise_sq_dists_numpy(rows)
    b = _kernels.pairwise_sq_dists_numba(rows)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-9)
    return ("pairwise_sq_dists (300x512)",
            time_call(_kernels.pairwise_sq_dists_numpy, rows,
                      repeats=repeats),
            time_call(_kernels.pairwise_sq_dists_numba, rows,
                      repeats=repeats))


def sgd_case(rng, c, d, hidden=None):
    n = 2000
    X = rng.normal(size=(n, d))
    y = rng.integers(0, c, size=n).astype(np.int64)
    epochs = 2
    order = np.concatenate(
        [rng.permutation(n) for _ in range(epochs)]).astype(np.int64)
    if hidden is None:
        w = rng.normal(size=c * d + c) * 0.1
    else:
        w = rng.normal(size=hidden * d + hidden + c * hidden + c) * 0.1
    return X, y, order, epochs, w


def bench_softmax(repeats):
    rng = np.random.default_rng(1)
    X, y, order, epochs, w0 = sgd_case(rng, c=10, d=64)
    wa, va = w0.copy(), np.zeros_like(w0)
    wb, vb = w0.copy(), np.zeros_like(w0)
    args = (X, y, order, epochs, 32, 10, 0.1, 0.9, 1e-4, 2.0)
    _kernels.softmax_sgd_numpy(wa, va, *args)
    _kernels.softmax_sgd_numba(wb, vb, *args)
    np.testing.assert_allclose(wa, wb, rtol=1e-9, atol=1e-10)

    def run(kernel):
        w, v = w0.copy(), np.zeros_like(w0)
        kernel(w, v, *args)

    return ("softmax_sgd (2000x64, c=10)",
            time_call(run, _kernels.softmax_sgd_numpy, repeats=repeats),
            time_call(run, _kernels.softmax_sgd_numba, repeats=repeats))


def bench_mlp(repeats):
    rng = np.random.default_rng(2)
    X, y, order, epochs, w0 = sgd_case(rng, c=10, d=64, hidden=32)
    wa, va = w0.copy(), np.zeros_like(w0)
    wb, vb = w0.copy(), np.zeros_like(w0)
    args = (X, y, order, epochs, 32, 10, 32, 0.1, 0.9, 1e-4, 2.0)
    _kernels.mlp_sgd_numpy(wa, va, *args)
    _kernels.mlp_sgd_numba(wb, vb, *args)
    np.testing.assert_allclose(wa, wb, rtol=1e-9, atol=1e-10)

    def run(kernel):
        w, v = w0.copy(), np.zeros_like(w0)
        kernel(w, v, *args)

    return ("mlp_sgd (2000x64, c=10, h=32)",
            time_call(run, _kernels.mlp_sgd_numpy, repeats=repeats),
            time_call(run, _kernels.mlp_sgd_numba, repeats=repeats))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per kernel (best is kept)")
    args = parser.parse_args()
    if not _backend.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"active backend: {_backend.backend_name()}")
    rows = [bench_pairwise(args.repeats),
            bench_softmax(args.repeats),
            bench_mlp(args.repeats)]
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_numpy, t_numba in rows:
        print(f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms  "
              f"{t_numba * 1e3:>8.2f}ms  {t_numpy / t_numba:>7.2f}x")
    print("all kernel variants agree")


if __name__ == "__main__":
    main()

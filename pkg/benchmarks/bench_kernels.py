"""Compare the compiled kernels against the pure-numpy fallback.

Runs the three hot kernels (levenshtein, nearest_centroids,
bincount_rows) on matched random inputs through both backends and
prints per-call timings plus the speedup. Results from the two
backends are also cross-checked so a speedup never comes from a
wrong answer.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 20] [--seed 0]
"""

import argparse
import time

import numpy as np

from dmlm.kernels import _pykernels

try:
    from dmlm.kernels import _ckernels
except ImportError:
    _ckernels = None


def time_call(fn, *args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def bench_levenshtein(rng, repeats):
    cases = []
    for length in (50, 200, 800):
        a = rng.integers(0, 30, size=length).astype(np.int32)
        b = rng.integers(0, 30, size=int(length * 1.1)).astype(np.int32)
        cases.append((f"levenshtein n={length}", (a, b)))
    return cases


def bench_nearest(rng, repeats):
    cases = []
    for n, k, d in ((2000, 64, 16), (20000, 256, 32)):
        x = rng.standard_normal((n, d))
        c = rng.standard_normal((k, d))
        cases.append((f"nearest_centroids n={n} k={k} d={d}", (x, c)))
    return cases


def bench_bincount(rng, repeats):
    cases = []
    for n, k, d in ((20000, 64, 16), (100000, 256, 32)):
        x = rng.standard_normal((n, d))
        labels = rng.integers(0, k, size=n).astype(np.int64)
        cases.append((f"bincount_rows n={n} k={k} d={d}", (x, labels, k)))
    return cases


def same_result(a, b):
    if isinstance(a, tuple):
        return all(same_result(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-10, atol=1e-10)
    return a == b


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats per case; the best run counts")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled backend not available; showing fallback timings only")

    rng = np.random.default_rng(args.seed)
    groups = [
        ("levenshtein", bench_levenshtein(rng, args.repeats)),
        ("nearest_centroids", bench_nearest(rng, args.repeats)),
        ("bincount_rows", bench_bincount(rng, args.repeats)),
    ]

    header = f"{'case':42s} {'python':>10s} {'cython':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, cases in groups:
        py_fn = getattr(_pykernels, name)
        c_fn = getattr(_ckernels, name) if _ckernels else None
        for label, call_args in cases:
            py_t, py_out = time_call(py_fn, *call_args, repeats=args.repeats)
            if c_fn is None:
                print(f"{label:42s} {py_t * 1e3:9.3f}ms {'-':>10s} {'-':>8s}")
                continue
            c_t, c_out = time_call(c_fn, *call_args, repeats=args.repeats)
            if not same_result(py_out, c_out):
                raise SystemExit(f"backend mismatch on {label}")
            print(f"{label:42s} {py_t * 1e3:9.3f}ms {c_t * 1e3:9.3f}ms "
                  f"{py_t / c_t:7.1f}x")


if __name__ == "__main__":
    main()

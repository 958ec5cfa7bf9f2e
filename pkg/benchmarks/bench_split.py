"""Benchmark the exact-greedy split scan: Cython extension vs numpy fallback.

Usage: python3 benchmarks/bench_split.py [--rows N] [--features M] [--repeats K]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rehabscore._kernels import available_backends


def run(rows: int, features: int, repeats: int) -> None:
    rng = np.random.default_rng(42)
    values = np.ascontiguousarray(rng.random((rows, features)))
    gradients = np.ascontiguousarray(rng.normal(size=rows))
    hessians = np.ones(rows)
    order = np.ascontiguousarray(np.argsort(values, axis=0, kind="stable").T)
    mask = np.ones(rows, dtype=np.uint8)

    backends = available_backends()
    results = {}
    timings = {}
    for name, fn in sorted(backends.items()):
        fn(values, gradients, hessians, order, mask, 1.0, 0.0, 1.0)  # warm up
        start = time.perf_counter()
        for _ in range(repeats):
            results[name] = fn(values, gradients, hessians, order, mask, 1.0, 0.0, 1.0)
        timings[name] = (time.perf_counter() - start) / repeats

    print(f"node scan: {rows} rows x {features} features, {repeats} repeats")
    for name in sorted(timings):
        per_call = timings[name]
        print(f"  {name:8s} {per_call * 1e3:9.3f} ms/call   best={results[name]}")
    if len(timings) == 2:
        if results["python"] != results["cython"]:
            raise SystemExit("backend results differ; parity is broken")
        ratio = timings["python"] / timings["cython"]
        print(f"  cython speedup over python: {ratio:.2f}x (identical results)")
    else:
        print("  extension not built; only the python backend was timed")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--features", type=int, default=44)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    run(args.rows, args.features, args.repeats)


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-Python kernel backends.

Run: python3 benchmarks/bench_kernels.py [--repeat 5] [--size 100000]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from rmtdetect import _kernels


def _cases(k, size: int):
    state = k.splitmix64_seed(1)
    u64 = np.empty(size, dtype=np.uint64)
    dbl = np.empty(size)
    series = 0.86 + 0.01 * np.random.default_rng(0).normal(size=max(size // 10, 200))
    usable = np.ones(series.size, dtype=np.uint8)
    flags = np.zeros(series.size, dtype=np.uint8)
    center, spread = np.empty(series.size), np.empty(series.size)
    return {
        f"fill_u64 ({size})": lambda: k.fill_u64(state, u64),
        f"fill_uniform ({size})": lambda: k.fill_uniform(state, dbl),
        f"fill_normal ({size})": lambda: k.fill_normal(state, dbl),
        f"robust_flags (n={series.size}, B=60)": lambda: k.robust_flags(
            series, usable, 5.0, 60, 1.4826, 1e-6, flags, center, spread
        ),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=100_000)
    args = ap.parse_args()

    names = [b for b in ("cython", "python") if b in _kernels.BACKENDS]
    results: dict[str, dict[str, float]] = {}
    for name in names:
        for label, fn in _cases(_kernels.get_backend(name), args.size).items():
            fn()
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            results.setdefault(label, {})[name] = best

    header = f"{'kernel':<34}" + "".join(f"{n:>12}" for n in names) + ("    speedup" if len(names) == 2 else "")
    print(header)
    print("-" * len(header))
    for label, row in results.items():
        line = f"{label:<34}" + "".join(f"{row[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"{row['python'] / row['cython']:>10.1f}x"
        print(line)


if __name__ == "__main__":
    main()

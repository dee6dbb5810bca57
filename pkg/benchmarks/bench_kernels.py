"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--n 200000] [--groups 100] [--repeat 5]

Both backends run the same compensated summations; outputs are checked for
bit-identity before timings are printed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from crtinfer import _kernels_py as pure

try:
    from crtinfer import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--groups", type=int, default=100)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if compiled is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(args.seed)
    values = rng.standard_normal(args.n) * 10.0 ** rng.integers(-3, 4, args.n)
    codes = rng.integers(0, args.groups, args.n).astype(np.intp)
    offsets = np.sort(np.concatenate([[0, args.n], rng.integers(0, args.n, args.groups - 1)])).astype(np.intp)

    cases = {
        "compensated_sum": (lambda m: m.compensated_sum(values)),
        "group_sums": (lambda m: m.group_sums(values, codes, args.groups)),
        "segment_sums": (lambda m: m.segment_sums(values, offsets)),
    }
    print(f"n={args.n} groups={args.groups} best of {args.repeat}")
    print(f"{'kernel':<16} {'compiled (ms)':>14} {'pure (ms)':>12} {'speedup':>9} {'identical':>10}")
    for name, call in cases.items():
        same = np.array_equal(np.asarray(call(compiled)), np.asarray(call(pure)))
        tc = _time(lambda: call(compiled), args.repeat)
        tp = _time(lambda: call(pure), max(1, args.repeat // 2))
        print(f"{name:<16} {1e3 * tc:14.3f} {1e3 * tp:12.3f} {tp / tc:9.1f} {str(same):>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

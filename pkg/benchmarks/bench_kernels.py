#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot paths (LCS table fill, greedy block alignment) on
synthetic token-id sequences shaped like real scoring inputs, then prints
per-pair timings and the speedup.

    python3 benchmarks/bench_kernels.py [--pairs 50] [--length 300]
"""

from __future__ import annotations

import argparse
import random
import time

from stemstep_eval.kernels import _pykernels

try:
    from stemstep_eval.kernels import _ckernels
except ImportError:
    _ckernels = None


def make_pairs(pairs: int, length: int, vocab: int, seed: int = 7):
    rng = random.Random(seed)
    out = []
    for _ in range(pairs):
        a = [rng.randrange(vocab) for _ in range(rng.randint(length // 2, length))]
        b = [rng.randrange(vocab) for _ in range(rng.randint(length // 2, length))]
        out.append((a, b))
    return out


def bench(fn, data):
    started = time.perf_counter()
    results = [fn(a, b) for a, b in data]
    return time.perf_counter() - started, results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=50)
    parser.add_argument("--length", type=int, default=300)
    parser.add_argument("--vocab", type=int, default=120)
    args = parser.parse_args()

    data = make_pairs(args.pairs, args.length, args.vocab)
    print(f"{args.pairs} pairs, up to {args.length} tokens each, vocab {args.vocab}\n")
    print(f"{'kernel':<16} {'backend':<8} {'total s':>9} {'ms/pair':>9} {'speedup':>8}")

    for name, py_fn, c_fn in (
        ("lcs_length", _pykernels.lcs_length, getattr(_ckernels, "lcs_length", None)),
        ("greedy_align", _pykernels.greedy_align, getattr(_ckernels, "greedy_align", None)),
    ):
        py_time, py_results = bench(py_fn, data)
        print(f"{name:<16} {'python':<8} {py_time:>9.3f} {1000 * py_time / len(data):>9.2f} {'1.0x':>8}")
        if c_fn is None:
            print(f"{name:<16} {'cython':<8} {'(extension not built)':>9}")
            continue
        c_time, c_results = bench(c_fn, data)
        if c_results != py_results:
            raise SystemExit(f"{name}: backend results diverge")
        speedup = py_time / c_time if c_time else float("inf")
        print(f"{name:<16} {'cython':<8} {c_time:>9.3f} {1000 * c_time / len(data):>9.2f} {f'{speedup:.1f}x':>8}")
    print("\nbackend outputs verified identical" if _ckernels else "")


if __name__ == "__main__":
    main()

"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--words N] [--repeat R] [--json PATH]

Each kernel runs on identical inputs in both backends; outputs are checked
for equality before timings are reported.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from memtestkit import _fallback

try:
    from memtestkit import _native
except ImportError:  # extension not built
    _native = None


def cases(words: int):
    rng = np.random.default_rng(7)
    base = rng.integers(0, 2**32, words, dtype=np.uint32)
    no_ops = np.empty(0, dtype=np.int64)
    n_blocks = (words + 255) // 256
    seeds = np.arange(1, n_blocks + 1, dtype=np.int64)
    n_gen = n_blocks
    fault_ops = np.sort(rng.choice(n_gen * 1024, 8, replace=False)).astype(np.int64)
    fault_bits = rng.integers(0, 32, 8).astype(np.int64)

    def fill_class(mod):
        arr = base.copy()
        mod.fill_class(arr, 0xA5A5A5A5, 20, 3, True)
        return arr

    yield "fill_class exclude (m=20)", fill_class
    yield "count_ne_class (m=20)", lambda mod: mod.count_ne_class(base, 7, 20, 3, False)
    yield "count_ne_range", lambda mod: mod.count_ne_range(base, 0, words, 7)
    yield "count_ne_words", lambda mod: mod.count_ne_words(base, 0, base[::-1].copy())
    yield "park_miller_blocks", lambda mod: mod.park_miller_blocks(seeds, 256, words, no_ops, no_ops)
    yield "lcg k=1024 x1", lambda mod: mod.lcg_generators(n_gen, 1024, 1664525, 1, 1, no_ops, no_ops,
                                                          None, None, no_ops, no_ops)
    yield "lcg k=256 x4 faulty", lambda mod: mod.lcg_generators(n_gen, 256, 1664525, 1, 4, fault_ops, fault_bits,
                                                                None, None, no_ops, no_ops)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--words", type=int, default=1 << 22)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if _native is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rows = []
    print(f"{'kernel':<28} {'native ms':>10} {'python ms':>10} {'speedup':>8}")
    for name, fn in cases(args.words):
        a, b = fn(_native), fn(_fallback)
        if not np.array_equal(np.asarray(a), np.asarray(b)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        tn = min(timeit.repeat(lambda: fn(_native), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "native_s": tn, "python_s": tp, "speedup": tp / tn})
        print(f"{name:<28} {tn * 1e3:>10.2f} {tp * 1e3:>10.2f} {tp / tn:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"words": args.words, "results": rows}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark the compiled kernels against the pure-Python fallback.

Run from the repository root:  python benchmarks/bench_kernels.py

The workload mirrors the faithfulness hot path: every summary sentence is
scored against every source sentence, so LCS and n-gram counting dominate.
"""

import random
import statistics
import time

import numpy as np

from ffci._kernels import _pure

try:
    from ffci._kernels import _native
except ImportError:
    _native = None


def make_pairs(n_pairs, length, vocab, seed=0):
    rng = random.Random(seed)
    return [([rng.randrange(vocab) for _ in range(length)],
             [rng.randrange(vocab) for _ in range(length)])
            for _ in range(n_pairs)]


def time_best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_lcs(pairs):
    def pure():
        for a, b in pairs:
            _pure.lcs_length(a, b)

    def native():
        for a, b in pairs:
            _native.lcs_length(np.asarray(a, np.int32), np.asarray(b, np.int32))

    return time_best_of(pure), time_best_of(native) if _native else None


def bench_ngrams(pairs, n):
    def pure():
        for a, b in pairs:
            _pure.clipped_ngram_matches(a, b, n)

    def native():
        for a, b in pairs:
            _native.clipped_ngram_matches(np.asarray(a, np.int32),
                                          np.asarray(b, np.int32), n)

    return time_best_of(pure), time_best_of(native) if _native else None


def report(label, pure_s, native_s):
    if native_s is None:
        print(f"{label:<34} pure {pure_s * 1e3:8.2f} ms   native unavailable")
    else:
        print(f"{label:<34} pure {pure_s * 1e3:8.2f} ms   "
              f"native {native_s * 1e3:8.2f} ms   x{pure_s / native_s:5.1f}")


def main():
    if _native is None:
        print("compiled kernels not built; showing pure timings only\n")

    for length, n_pairs in ((20, 2000), (60, 500), (200, 60)):
        pairs = make_pairs(n_pairs, length, vocab=min(length, 50))
        report(f"lcs_length len={length} x{n_pairs}", *bench_lcs(pairs))

    for n in (1, 2):
        pairs = make_pairs(2000, 25, vocab=40)
        report(f"clipped_ngram_matches n={n} x2000", *bench_ngrams(pairs, n))

    # sanity: both backends agree on a few random inputs
    if _native is not None:
        rng = random.Random(1)
        for _ in range(200):
            a = [rng.randrange(9) for _ in range(rng.randrange(30))]
            b = [rng.randrange(9) for _ in range(rng.randrange(30))]
            assert _pure.lcs_length(a, b) == _native.lcs_length(
                np.asarray(a, np.int32), np.asarray(b, np.int32))
        print("\nbackends agree on 200 random inputs")


if __name__ == "__main__":
    main()

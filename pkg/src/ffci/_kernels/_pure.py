"""Pure-Python kernels; semantics mirrored exactly by the compiled backend."""

from collections import Counter

BACKEND = "pure"


def lcs_length(a, b) -> int:
    """Longest-common-subsequence length between two int sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    if m > n:  # keep the rolling row short
        a, b = b, a
        n, m = m, n
    prev = [0] * (m + 1)
    for x in a:
        cur = [0] * (m + 1)
        for j in range(1, m + 1):
            if x == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                pj, cj = prev[j], cur[j - 1]
                cur[j] = pj if pj >= cj else cj
        prev = cur
    return prev[m]


def clipped_ngram_matches(cand, ref, n: int) -> int:
    """Sum over n-grams of min(candidate count, reference count)."""
    if len(cand) < n or len(ref) < n:
        return 0
    cand = list(cand)
    ref = list(ref)
    ref_counts = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
    cand_counts = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
    return sum(min(c, ref_counts[g]) for g, c in cand_counts.items() if g in ref_counts)

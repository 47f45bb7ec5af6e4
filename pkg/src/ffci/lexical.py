"""String-overlap metrics: ROUGE-1/2/n, ROUGE-L, and BLEU.

Precision, recall, and F1 are exposed separately so the same metric can serve
focus (precision), coverage (recall), and faithfulness (F1).  Zero-denominator
convention everywhere: a precision or recall with an empty denominator is 0,
and F1 of (0, 0) is 0, so scoring is total over degenerate summaries.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ffci import _kernels


@dataclass(frozen=True)
class PrfScore:
    """Precision/recall/F1 triple in [0, 1].

    ``degenerate`` marks scores that were defined-zero because an input was
    empty rather than because nothing matched.
    """

    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def __post_init__(self):
        for name in ("precision", "recall", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_pr(cls, precision: float, recall: float, degenerate: bool = False) -> "PrfScore":
        if precision + recall > 0.0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        return cls(precision, recall, f1, degenerate)

    def component(self, name: str) -> float:
        return getattr(self, name)


DEGENERATE_ZERO = PrfScore(0.0, 0.0, 0.0, degenerate=True)


def _intern(candidate: Sequence[str], reference: Sequence[str]) -> tuple[list[int], list[int]]:
    vocab: dict[str, int] = {}
    cand = [vocab.setdefault(t, len(vocab)) for t in candidate]
    ref = [vocab.setdefault(t, len(vocab)) for t in reference]
    return cand, ref


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> PrfScore:
    """N-gram overlap with clipped counting (per-gram min of the two counts)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand_total = max(0, len(candidate) - n + 1)
    ref_total = max(0, len(reference) - n + 1)
    if cand_total == 0 or ref_total == 0:
        matches = 0
    else:
        cand_ids, ref_ids = _intern(candidate, reference)
        matches = _kernels.clipped_ngram_matches(cand_ids, ref_ids, n)
    precision = matches / cand_total if cand_total else 0.0
    recall = matches / ref_total if ref_total else 0.0
    return PrfScore.from_pr(precision, recall)


def lcs_length(candidate: Sequence[str], reference: Sequence[str]) -> int:
    cand_ids, ref_ids = _intern(candidate, reference)
    return _kernels.lcs_length(cand_ids, ref_ids)


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PrfScore:
    """Longest-common-subsequence overlap."""
    if not candidate or not reference:
        return PrfScore.from_pr(0.0, 0.0)
    lcs = lcs_length(candidate, reference)
    return PrfScore.from_pr(lcs / len(candidate), lcs / len(reference))


def _modified_precision(candidate: Sequence[str], references: Sequence[Sequence[str]],
                        n: int) -> tuple[int, int]:
    """Clipped n-gram matches against the per-gram max across references."""
    total = max(0, len(candidate) - n + 1)
    if total == 0:
        return 0, 0
    cand_counts = Counter(tuple(candidate[i:i + n]) for i in range(total))
    max_ref: Counter = Counter()
    for ref in references:
        ref_counts = Counter(tuple(ref[i:i + n]) for i in range(max(0, len(ref) - n + 1)))
        for gram, count in ref_counts.items():
            if count > max_ref[gram]:
                max_ref[gram] = count
    matches = sum(min(c, max_ref[g]) for g, c in cand_counts.items())
    return matches, total


def bleu(candidate: Sequence[str], references: Sequence[Sequence[str]],
         max_n: int = 4, smoothing: str = "none") -> float:
    """Geometric mean of modified n-gram precisions times a brevity penalty.

    Single-number precision-oriented score in [0, 1].  The order is capped at
    the candidate length, the brevity penalty uses the reference whose length
    is closest to the candidate (ties to the shorter), and ``add_one``
    smoothing adds one to both numerator and denominator of every order.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not references:
        raise ValueError("at least one reference is required")
    if smoothing not in ("none", "add_one"):
        raise ValueError(f"unknown smoothing {smoothing!r}")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(1, min(max_n, c) + 1):
        matches, total = _modified_precision(candidate, references, n)
        if smoothing == "add_one":
            p = (matches + 1) / (total + 1)
        else:
            if matches == 0:
                return 0.0
            p = matches / total
        log_sum += math.log(p)
        orders += 1
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / orders)

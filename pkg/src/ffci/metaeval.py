"""Meta-evaluation harness.

Correlates metric scores with human judgements, normalizes and aggregates
crowd annotations, sweeps model layers, and picks the best (model, layer) by
average rank across dataset-system pairs.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from ffci.corpus import AnnotationRecord, EvalInstance
from ffci.errors import CacheMissError, DataError, ProviderUnavailableError, ZeroVarianceError

QC_PASS_THRESHOLD = 7  # correct control answers out of 10 needed to pass
QC_CONTROL_COUNT = 10
DEFAULT_QC_TOLERANCE = 25.0  # band around the expected control score


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation.

    Computed as cov / sqrt(varx * vary) (one square root of the product) so
    exact rational cases come out exact.  Raises ZeroVarianceError on constant
    input instead of silently returning 0.
    """
    if len(xs) != len(ys):
        raise DataError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 3:
        raise DataError(f"need at least 3 points, got {len(xs)}")
    mx, my = _mean(xs), _mean(ys)
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("correlation undefined for constant input")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = sxy / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def average_ranks(values: Sequence[float], descending: bool = False) -> list[float]:
    """Ranks starting at 1, with ties receiving the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i], reverse=descending)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of averaged-rank-transformed values."""
    if len(xs) != len(ys):
        raise DataError(f"length mismatch: {len(xs)} vs {len(ys)}")
    return pearson(average_ranks(xs), average_ranks(ys))


@dataclass(frozen=True)
class WorkerProfile:
    """One worker's non-control scores with their population statistics."""

    worker_id: str
    raw_scores: tuple[float, ...]
    mean: float
    stdev: float  # population standard deviation

    @classmethod
    def from_scores(cls, worker_id: str, scores: Sequence[float]) -> "WorkerProfile":
        if len(scores) < 2:
            raise DataError(f"worker {worker_id!r}: need at least 2 scores to standardize")
        scores = tuple(float(s) for s in scores)
        # identical values must give exactly zero variance even when fsum/n
        # rounds the mean off the common value
        if all(s == scores[0] for s in scores):
            return cls(worker_id, scores, scores[0], 0.0)
        mean = _mean(scores)
        var = math.fsum((s - mean) ** 2 for s in scores) / len(scores)
        return cls(worker_id, scores, mean, math.sqrt(var))


@dataclass(frozen=True)
class NormalizedScores:
    values: tuple[float, ...]
    zero_variance: bool = False


def zscore_normalize(worker: WorkerProfile) -> NormalizedScores:
    """Standardize a worker's scores; constant workers map to zeros, flagged."""
    if len(worker.raw_scores) < 2:
        raise DataError(f"worker {worker.worker_id!r}: need at least 2 scores")
    if worker.stdev == 0.0:
        return NormalizedScores((0.0,) * len(worker.raw_scores), zero_variance=True)
    return NormalizedScores(
        tuple((s - worker.mean) / worker.stdev for s in worker.raw_scores))


@dataclass(frozen=True)
class QualityControlResult:
    hit_id: str
    correct_count: int
    passed: bool


def quality_control_check(hit_records: Sequence[AnnotationRecord],
                          tolerance: float = DEFAULT_QC_TOLERANCE,
                          hit_id: Optional[str] = None) -> QualityControlResult:
    """Check the 10 control instances of one HIT against the 7-correct bar.

    A control answer counts as correct when it lies within ``tolerance`` of
    the expected score on the 0-100 scale.
    """
    controls = [r for r in hit_records if r.is_control]
    if len(controls) != QC_CONTROL_COUNT:
        raise DataError(f"a HIT must contain exactly {QC_CONTROL_COUNT} control "
                        f"records, got {len(controls)}")
    if hit_id is None:
        workers = {r.worker_id for r in hit_records}
        hit_id = controls[0].worker_id if len(workers) == 1 else "|".join(sorted(workers))
    correct = sum(1 for r in controls
                  if abs(r.raw_score - r.control_expected) <= tolerance)
    return QualityControlResult(hit_id, correct, correct >= QC_PASS_THRESHOLD)


@dataclass
class AggregationResult:
    """Per-item mean z-scores plus the items that lost all their annotators."""

    scores: dict[str, float]
    missing_items: list[str]
    failed_workers: list[str]


def aggregate_annotations(records: Sequence[AnnotationRecord],
                          tolerance: float = DEFAULT_QC_TOLERANCE) -> AggregationResult:
    """Quality-control, z-score per worker, then average per item.

    Workers are treated as one HIT each: those carrying control records must
    carry exactly 10 and pass the 7-correct bar; workers without controls pass
    vacuously.  Scores of failing workers are dropped; control items never
    appear in the output.  Items whose every record came from a failing worker
    are reported in ``missing_items`` rather than scored.
    """
    by_worker: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        by_worker[rec.worker_id].append(rec)

    failed: set[str] = set()
    for worker_id, recs in by_worker.items():
        controls = [r for r in recs if r.is_control]
        if controls:
            result = quality_control_check(recs, tolerance, hit_id=worker_id)
            if not result.passed:
                failed.add(worker_id)

    per_item: dict[str, list[float]] = defaultdict(list)
    seen_items: dict[str, bool] = {}  # item -> has at least one passing record
    for worker_id, recs in sorted(by_worker.items()):
        scorable = [r for r in recs if not r.is_control]
        if not scorable:
            continue
        for r in scorable:
            seen_items.setdefault(r.item_id, False)
        if worker_id in failed:
            continue
        if len(scorable) < 2:
            raise DataError(f"worker {worker_id!r}: need at least 2 non-control "
                            f"scores to standardize")
        profile = WorkerProfile.from_scores(worker_id, [r.raw_score for r in scorable])
        normalized = zscore_normalize(profile)
        for r, z in zip(scorable, normalized.values):
            per_item[r.item_id].append(z)
            seen_items[r.item_id] = True

    scores = {item: _mean(zs) for item, zs in per_item.items()}
    missing = sorted(item for item, ok in seen_items.items() if not ok)
    return AggregationResult(scores, missing, sorted(failed))


class CorrelationTable:
    """(model, layer, pair_id) -> correlation accumulator.

    Cells may arrive in any order; absent cells are simply missing keys.
    """

    def __init__(self):
        self._cells: dict[tuple[str, int, str], float] = {}

    def add(self, model_id: str, layer: int, pair_id: str, value: float) -> None:
        if not -1.0 <= value <= 1.0:
            raise DataError(f"correlation {value} outside [-1, 1]")
        self._cells[(model_id, int(layer), pair_id)] = value

    def get(self, model_id: str, layer: int, pair_id: str) -> Optional[float]:
        return self._cells.get((model_id, int(layer), pair_id))

    def __len__(self) -> int:
        return len(self._cells)

    def cells(self) -> dict[tuple[str, int, str], float]:
        return dict(self._cells)

    def candidates(self) -> list[tuple[str, int]]:
        return sorted({(m, l) for m, l, _ in self._cells})

    def pair_ids(self) -> list[str]:
        return sorted({p for _, _, p in self._cells})

    def models(self) -> list[str]:
        return sorted({m for m, _, _ in self._cells})

    def restrict_to_model(self, model_id: str) -> "CorrelationTable":
        out = CorrelationTable()
        for (m, l, p), v in self._cells.items():
            if m == model_id:
                out.add(m, l, p, v)
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model", "layer", "pair_id", "pearson"])
            for (m, l, p) in sorted(self._cells):
                writer.writerow([m, l, p, repr(self._cells[(m, l, p)])])

    @classmethod
    def read_csv(cls, path) -> "CorrelationTable":
        table = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                table.add(row["model"], int(row["layer"]), row["pair_id"],
                          float(row["pearson"]))
        return table


def layer_sweep(score_fn: Callable[[int, EvalInstance], float],
                model_id: str,
                layers: Sequence[int],
                human: Mapping[str, float],
                instances: Sequence[EvalInstance],
                pair_key: Callable[[EvalInstance], str] = lambda inst: inst.system_name,
                ) -> CorrelationTable:
    """Correlate metric scores against human z-scores for each layer.

    ``score_fn(layer, instance)`` produces the metric value; instances are
    grouped into dataset-system pairs by ``pair_key``.  A layer whose
    embeddings are unavailable leaves its cells absent and the sweep continues.
    """
    groups: dict[str, list[EvalInstance]] = defaultdict(list)
    for inst in instances:
        if inst.id not in human:
            raise DataError(f"no human score for instance {inst.id!r}")
        groups[pair_key(inst)].append(inst)

    table = CorrelationTable()
    for layer in layers:
        for pair_id, group in sorted(groups.items()):
            try:
                xs = [score_fn(layer, inst) for inst in group]
            except (CacheMissError, ProviderUnavailableError):
                continue  # cell stays absent
            ys = [human[inst.id] for inst in group]
            table.add(model_id, layer, pair_id, pearson(xs, ys))
    return table


def select_by_average_rank(table: CorrelationTable) -> tuple[str, int]:
    """Pick the (model, layer) with the lowest mean rank across pair ids.

    Candidates are ranked per pair id by descending correlation (rank 1 best,
    ties averaged).  Remaining ties break toward the lower layer index, then
    the lexicographically smaller model id.
    """
    candidates = table.candidates()
    if not candidates:
        raise DataError("empty correlation table")
    pair_ids = table.pair_ids()
    for cand in candidates:
        for pid in pair_ids:
            if table.get(cand[0], cand[1], pid) is None:
                raise DataError(f"candidate {cand} missing pair {pid!r}; "
                                f"table must be complete before selection")

    mean_rank: dict[tuple[str, int], float] = {c: 0.0 for c in candidates}
    for pid in pair_ids:
        values = [table.get(m, l, pid) for m, l in candidates]
        ranks = average_ranks(values, descending=True)
        for cand, rank in zip(candidates, ranks):
            mean_rank[cand] += rank
    n = len(pair_ids)
    best = min(candidates, key=lambda c: (mean_rank[c] / n, c[1], c[0]))
    return best

"""The four aspect scorers: faithfulness, focus, coverage, and coherence.

Scorers are pure given their injected metric or probability functions; the
functions may be backed by a remote provider, so nothing here assumes they
return quickly.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ffci.corpus import SegmentedText, capitalized_entities, tokenize
from ffci.errors import DataError
from ffci.lexical import PrfScore

FA_METRICS = ("rouge1", "rouge2", "sts", "embed")
DEFAULT_TOP_N = {"rouge1": 2, "rouge2": 2, "sts": 3, "embed": 3}

NEGATIVE_TYPES = ("type1", "type2", "type3", "type4")

# Negative-sample composition per training-data variant.
VARIANT_RATIOS: dict[int, dict[str, float]] = {
    1: {"type1": 1.0},
    2: {"type2": 1.0},
    3: {"type1": 0.5, "type2": 0.5},
    4: {"type2": 0.5, "type3": 0.1, "type4": 0.4},
    5: {"type1": 0.5, "type3": 0.1, "type4": 0.4},
}


@dataclass(frozen=True)
class AspectScore:
    """A single aspect value; ``degenerate`` marks defined-zero results for
    empty inputs."""

    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class FaithfulnessConfig:
    """Summary-vs-source matching configuration.

    ``top_n`` defaults to 2 for the ROUGE metrics and 3 for the embedding ones;
    ``model_id``/``layer`` are given only for the token-embedding metric.
    ``max_source_sentences`` optionally truncates the source before matching.
    """

    metric: str = "embed"
    top_n: Optional[int] = None
    model_id: Optional[str] = None
    layer: Optional[int] = None
    max_source_sentences: Optional[int] = None

    def __post_init__(self):
        if self.metric not in FA_METRICS:
            raise ValueError(f"unknown faithfulness metric {self.metric!r}")
        if self.top_n is None:
            object.__setattr__(self, "top_n", DEFAULT_TOP_N[self.metric])
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.metric == "embed":
            if self.model_id is None or self.layer is None:
                raise ValueError("embed metric requires model_id and layer")
        elif self.layer is not None:
            raise ValueError(f"layer only applies to the embed metric, not {self.metric!r}")


@dataclass(frozen=True)
class CoherenceConfig:
    """Weighted entity-overlap/cosine coherence baseline configuration."""

    lam: float = 0.5
    ne_extractor: str = "capitalized_heuristic"  # or "provider"
    embedding_source: str = ""

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.ne_extractor not in ("capitalized_heuristic", "provider"):
            raise ValueError(f"unknown ne_extractor {self.ne_extractor!r}")


@dataclass(frozen=True)
class NspPair:
    """A sentence pair for next-sentence-prediction training."""

    first: str
    second: str
    label: str  # positive | negative
    negative_type: Optional[str] = None

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValueError(f"unknown label {self.label!r}")
        if (self.label == "negative") != (self.negative_type is not None):
            raise ValueError("negative_type must be present iff label == negative")
        if self.negative_type is not None and self.negative_type not in NEGATIVE_TYPES:
            raise ValueError(f"unknown negative_type {self.negative_type!r}")


@dataclass(frozen=True)
class FfciScores:
    """Per-instance aspect scores; ic is absent for single-sentence summaries."""

    faithfulness: Optional[float] = None
    focus: Optional[float] = None
    coverage: Optional[float] = None
    ic: Optional[float] = None

    def __post_init__(self):
        for name in ("faithfulness", "focus", "coverage", "ic"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


def avg_top_n(scores: Sequence[float], n: int) -> float:
    """Mean of the n largest values; n larger than the list means plain mean."""
    if not scores:
        raise ValueError("avg_top_n needs at least one score")
    if n < 1:
        raise ValueError("n must be >= 1")
    top = sorted(scores, reverse=True)[:n]
    return math.fsum(top) / len(top)


def faithfulness_score(summary: SegmentedText, source: SegmentedText,
                       cfg: FaithfulnessConfig,
                       metric_eval: Callable[[str, str], float]) -> AspectScore:
    """Mean over summary sentences of the top-n best matches in the source.

    Each summary sentence is scored against every source sentence with
    ``metric_eval`` and the top ``cfg.top_n`` matches are averaged; the outer
    mean over summary sentences is the faithfulness value.
    """
    summary_sents = summary.sentence_texts()
    if not summary_sents:
        return AspectScore(0.0, degenerate=True)
    source_sents = source.sentence_texts()
    if cfg.max_source_sentences is not None:
        source_sents = source_sents[:cfg.max_source_sentences]
    if not source_sents:
        raise ValueError("source must contain at least one sentence")
    per_sentence = []
    for t in summary_sents:
        scores = [metric_eval(t, s) for s in source_sents]
        per_sentence.append(avg_top_n(scores, cfg.top_n))
    return AspectScore(math.fsum(per_sentence) / len(per_sentence))


MetricSelector = Callable[[str, str], PrfScore]


def focus_score(system: str, reference: str, metric: MetricSelector) -> AspectScore:
    """Precision of the system summary against the reference."""
    if not system.strip():
        return AspectScore(0.0, degenerate=True)
    return AspectScore(metric(system, reference).precision)


def coverage_score(system: str, reference: str, metric: MetricSelector) -> AspectScore:
    """Recall of the system summary against the reference."""
    if not system.strip():
        return AspectScore(0.0, degenerate=True)
    return AspectScore(metric(system, reference).recall)


def _sentence_vector(sentence: str, word_vectors: Mapping[str, np.ndarray]) -> np.ndarray:
    vecs = [word_vectors[t] for t in tokenize(sentence) if t in word_vectors]
    if not vecs:
        return np.zeros(0)
    return np.mean(np.stack(vecs), axis=0)


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    if u.size == 0 or v.size == 0:
        return 0.0
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    # clamp at 0 so the coherence score stays in [0, 1]
    return min(1.0, max(0.0, float(np.dot(u, v)) / (nu * nv)))


def entity_overlap(first: Sequence[str], second: Sequence[str]) -> float:
    """Overlap coefficient |A∩B| / min(|A|, |B|), 0 when either set is empty."""
    a = {e.lower() for e in first}
    b = {e.lower() for e in second}
    if not a or not b:
        return 0.0
    return len(a & b) / min(len(a), len(b))


def coherence_baseline_score(summary: SegmentedText, cfg: CoherenceConfig,
                             word_vectors: Mapping[str, np.ndarray],
                             entity_fn: Optional[Callable[[str], list[str]]] = None,
                             ) -> Optional[float]:
    """Adjacent-sentence coherence: lambda*NESim + (1-lambda)*CosSim, averaged.

    CosSim is the cosine of mean static word vectors; NESim the overlap
    coefficient of the sentences' entity sets.  Returns None (not 0) for
    summaries with fewer than two sentences, where the score is undefined.
    """
    sentences = summary.sentence_texts()
    if len(sentences) < 2:
        return None
    if entity_fn is None:
        if cfg.ne_extractor == "provider":
            raise ValueError("ne_extractor 'provider' requires an entity_fn")
        entity_fn = capitalized_entities
    entities = [entity_fn(s) for s in sentences]
    vectors = [_sentence_vector(s, word_vectors) for s in sentences]
    pair_scores = []
    for i in range(len(sentences) - 1):
        ne = entity_overlap(entities[i], entities[i + 1])
        cos = _cosine(vectors[i], vectors[i + 1])
        pair_scores.append(cfg.lam * ne + (1.0 - cfg.lam) * cos)
    return math.fsum(pair_scores) / len(pair_scores)


def nsp_score(summary: SegmentedText, nsp_prob: Callable[[str, str], float],
              aggregation: str = "mean") -> Optional[float]:
    """Aggregate next-sentence probabilities over consecutive sentence pairs.

    Mean aggregation is the default; max and min are available as variants.
    Returns None for summaries with fewer than two sentences.
    """
    if aggregation not in ("mean", "max", "min"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    sentences = summary.sentence_texts()
    if len(sentences) < 2:
        return None
    probs = []
    for first, second in zip(sentences, sentences[1:]):
        p = nsp_prob(first, second)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"nsp probability {p} outside [0, 1] for pair "
                             f"({first[:30]!r}, {second[:30]!r})")
        probs.append(p)
    if aggregation == "mean":
        return math.fsum(probs) / len(probs)
    return max(probs) if aggregation == "max" else min(probs)


def largest_remainder(ratios: Mapping[str, float], total: int) -> dict[str, int]:
    """Integer apportionment of ``total`` by ratio, largest remainder first."""
    quotas = {k: ratios[k] * total for k in ratios}
    counts = {k: int(math.floor(q)) for k, q in quotas.items()}
    leftover = total - sum(counts.values())
    by_remainder = sorted(ratios, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in by_remainder[:leftover]:
        counts[k] += 1
    return counts


def _corrupt_repetitive(sentence: str, rng: random.Random) -> str:
    """Duplicate ~10% of the tokens (at least one) in place."""
    words = sentence.split()
    k = max(1, round(0.1 * len(words)))
    positions = sorted(rng.sample(range(len(words)), min(k, len(words))))
    out: list[str] = []
    pos_set = set(positions)
    for i, w in enumerate(words):
        out.append(w)
        if i in pos_set:
            out.append(w)
    return " ".join(out)


def build_nsp_pairs(articles: Sequence[SegmentedText], variant: int,
                    n_positive: int, n_negative: int, seed: int) -> list[NspPair]:
    """Construct NSP training pairs from an article corpus.

    Positives are adjacent sentence pairs in original order.  Negatives follow
    the variant's composition over four strategies: flipped adjacent pairs
    (type1), second sentence from a different document (type2), corrupted
    repetitive second sentence (type3), and second sentence from an arbitrary
    non-adjacent position of the same document (type4).  Deterministic under a
    fixed seed.
    """
    if variant not in VARIANT_RATIOS:
        raise ValueError(f"unknown variant {variant}; expected 1..5")
    if n_positive < 0 or n_negative < 0:
        raise ValueError("pair budgets must be non-negative")
    rng = random.Random(seed)
    sent_lists = [a.sentence_texts() for a in articles]

    adjacent = [(d, i) for d, sents in enumerate(sent_lists)
                for i in range(len(sents) - 1)]
    composition = largest_remainder(VARIANT_RATIOS[variant], n_negative)

    need_adjacent = max(n_positive, composition.get("type1", 0))
    if len(adjacent) < need_adjacent:
        raise DataError(f"insufficient adjacent sentence pairs: need "
                        f"{need_adjacent}, have {len(adjacent)}")

    pairs: list[NspPair] = []

    for j in sorted(rng.sample(range(len(adjacent)), n_positive)):
        d, i = adjacent[j]
        pairs.append(NspPair(sent_lists[d][i], sent_lists[d][i + 1], "positive"))

    n_type1 = composition.get("type1", 0)
    if n_type1:
        for j in sorted(rng.sample(range(len(adjacent)), n_type1)):
            d, i = adjacent[j]
            pairs.append(NspPair(sent_lists[d][i + 1], sent_lists[d][i],
                                 "negative", "type1"))

    n_type2 = composition.get("type2", 0)
    if n_type2:
        docs_with_sents = [d for d, sents in enumerate(sent_lists) if sents]
        if len(docs_with_sents) < 2:
            raise DataError(f"type2 negatives need at least 2 documents, have "
                            f"{len(docs_with_sents)}")
        for _ in range(n_type2):
            da = rng.choice(docs_with_sents)
            first = rng.choice(sent_lists[da])
            db = rng.choice([d for d in docs_with_sents if d != da])
            second = rng.choice(sent_lists[db])
            pairs.append(NspPair(first, second, "negative", "type2"))

    n_type3 = composition.get("type3", 0)
    if n_type3:
        candidates = [(d, i) for d, sents in enumerate(sent_lists)
                      for i in range(len(sents)) if sents[i].split()]
        if not candidates:
            raise DataError("type3 negatives need at least one non-empty sentence")
        for _ in range(n_type3):
            d, i = candidates[rng.randrange(len(candidates))]
            first = sent_lists[d][i]
            pairs.append(NspPair(first, _corrupt_repetitive(first, rng),
                                 "negative", "type3"))

    n_type4 = composition.get("type4", 0)
    if n_type4:
        eligible = [d for d, sents in enumerate(sent_lists) if len(sents) >= 3]
        if not eligible:
            raise DataError("type4 negatives need a document with >= 3 sentences")
        for _ in range(n_type4):
            d = eligible[rng.randrange(len(eligible))]
            sents = sent_lists[d]
            i = rng.randrange(len(sents))
            # exclude the sentence itself and its true successor
            choices = [j for j in range(len(sents)) if j != i and j != i + 1]
            j = choices[rng.randrange(len(choices))]
            pairs.append(NspPair(sents[i], sents[j], "negative", "type4"))

    return pairs


def write_nsp_pairs(pairs: Sequence[NspPair], path) -> None:
    """Export pairs as JSONL for the fine-tuning sidecar."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "first": p.first,
                "second": p.second,
                "label": p.label,
                "negative_type": p.negative_type,
            }, ensure_ascii=False) + "\n")


def load_nsp_pairs(path) -> list[NspPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pairs.append(NspPair(obj["first"], obj["second"], obj["label"],
                                     obj.get("negative_type")))
    return pairs

"""Embedding-based similarity metrics.

Two families share the same greedy best-match structure: token-level matching
over per-layer contextual embeddings, and segment-level matching over sentence
or EDU embeddings.  All vectors are L2-normalized at ingestion so the inner
product is a cosine and the resulting scores stay in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ffci.lexical import DEGENERATE_ZERO, PrfScore

GRANULARITIES = ("edu", "sentence", "document")

# Fixed affine map from cosine in [-1, 1] to a similarity in [0, 1] for the
# segment-level score.
STS_SIMILARITY_OFFSET = 1.0
STS_SIMILARITY_SCALE = 0.5

_NORM_TOL = 1e-6


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize each row in float64; all-zero rows are left as zeros."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors.reshape(1, -1)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return vectors / safe


def _check_normalized(vectors: np.ndarray, what: str) -> None:
    if vectors.size == 0:
        return
    norms = np.linalg.norm(vectors, axis=1)
    bad = ~((np.abs(norms - 1.0) <= _NORM_TOL) | (norms == 0.0))
    if bad.any():
        raise ValueError(f"{what}: vectors must be L2-normalized (bad norm {norms[bad][0]})")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-token vectors for one text at one (model, layer)."""

    model_id: str
    layer: int
    tokens: tuple[str, ...]
    vectors: np.ndarray  # shape (len(tokens), dim), rows L2-normalized

    def __post_init__(self):
        if self.layer < 0:
            raise ValueError("layer must be non-negative")
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 and len(self.tokens) > 0:
            raise ValueError("vectors must be a 2-D array")
        if vectors.ndim == 2 and vectors.shape[0] != len(self.tokens):
            raise ValueError(
                f"{vectors.shape[0]} vectors for {len(self.tokens)} tokens")
        _check_normalized(vectors, f"EmbeddingMatrix({self.model_id})")
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def from_raw(cls, model_id: str, layer: int, tokens: Sequence[str],
                 vectors) -> "EmbeddingMatrix":
        """Build a matrix from unnormalized vectors."""
        tokens = tuple(tokens)
        arr = np.asarray(vectors, dtype=np.float64)
        if len(tokens) == 0:
            arr = np.zeros((0, arr.shape[-1] if arr.ndim == 2 else 0))
        return cls(model_id, layer, tokens, normalize_rows(arr) if len(tokens) else arr)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return 0 if self.vectors.size == 0 else self.vectors.shape[1]


@dataclass(frozen=True)
class SegmentEmbedding:
    """One embedded text segment at a declared granularity."""

    segment_text: str
    vector: np.ndarray
    granularity: str

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        _check_normalized(vec.reshape(1, -1), "SegmentEmbedding")
        object.__setattr__(self, "vector", vec)

    @classmethod
    def from_raw(cls, segment_text: str, vector, granularity: str) -> "SegmentEmbedding":
        return cls(segment_text, normalize_rows(vector)[0], granularity)


def _mean_best_match(rows: np.ndarray, against: np.ndarray) -> float:
    """Mean over rows of the best clamped cosine against the other matrix.

    The recall direction is computed by calling this with swapped arguments,
    which makes the precision/recall duality hold exactly.
    """
    sims = rows @ against.T
    np.clip(sims, -1.0, 1.0, out=sims)
    best = sims.max(axis=1)
    np.clip(best, 0.0, 1.0, out=best)
    return math.fsum(best.tolist()) / len(best)


def greedy_match_score(candidate: EmbeddingMatrix, reference: EmbeddingMatrix) -> PrfScore:
    """Greedy token-matching precision/recall/F1 between two embedded texts.

    Precision is the mean over candidate tokens of the maximum cosine against
    any reference token, recall the mirror image, F1 their harmonic mean.
    Negative best-matches contribute 0 so all components stay in [0, 1].
    """
    if candidate.model_id != reference.model_id or candidate.layer != reference.layer:
        raise ValueError(
            f"matrices come from different sources: "
            f"({candidate.model_id}, layer {candidate.layer}) vs "
            f"({reference.model_id}, layer {reference.layer})")
    if len(candidate) == 0 or len(reference) == 0:
        return DEGENERATE_ZERO
    if candidate.dim != reference.dim:
        raise ValueError(f"dimension mismatch: {candidate.dim} vs {reference.dim}")
    precision = _mean_best_match(candidate.vectors, reference.vectors)
    recall = _mean_best_match(reference.vectors, candidate.vectors)
    return PrfScore.from_pr(precision, recall)


def _segment_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sims = a @ b.T
    np.clip(sims, -1.0, 1.0, out=sims)
    return (sims + STS_SIMILARITY_OFFSET) * STS_SIMILARITY_SCALE


def _mean_best_segment(rows: np.ndarray, against: np.ndarray) -> float:
    best = _segment_similarity_matrix(rows, against).max(axis=1)
    return math.fsum(best.tolist()) / len(best)


def sts_prf(candidate_segments: Sequence[SegmentEmbedding],
            reference_segments: Sequence[SegmentEmbedding]) -> PrfScore:
    """Segment-level best-match precision/recall/F1.

    Cosines are mapped from [-1, 1] to [0, 1] with a fixed affine map before
    the per-segment max is taken.  At document granularity both lists are
    singletons and the three components coincide.
    """
    if not candidate_segments or not reference_segments:
        return DEGENERATE_ZERO
    grans = {s.granularity for s in candidate_segments} | \
            {s.granularity for s in reference_segments}
    if len(grans) != 1:
        raise ValueError(f"granularity mismatch: {sorted(grans)}")
    cand = np.stack([s.vector for s in candidate_segments])
    ref = np.stack([s.vector for s in reference_segments])
    if cand.shape[1] != ref.shape[1]:
        raise ValueError(f"dimension mismatch: {cand.shape[1]} vs {ref.shape[1]}")
    precision = _mean_best_segment(cand, ref)
    recall = _mean_best_segment(ref, cand)
    return PrfScore.from_pr(precision, recall)

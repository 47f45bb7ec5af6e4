import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffci.embed import (EmbeddingMatrix, SegmentEmbedding, greedy_match_score,
                        normalize_rows, sts_prf)


def matrix(vectors, model_id="m", layer=0, tokens=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    if tokens is None:
        tokens = tuple(f"t{i}" for i in range(vectors.shape[0]))
    return EmbeddingMatrix(model_id, layer, tuple(tokens), normalize_rows(vectors))


def brute_force_greedy(cand, ref):
    """Independent per-token-max reimplementation with explicit loops."""
    def best(row, others):
        sims = []
        for other in others:
            s = float(np.dot(row, other))
            s = max(-1.0, min(1.0, s))
            sims.append(s)
        return max(0.0, min(1.0, max(sims)))
    p = math.fsum(best(c, ref) for c in cand) / len(cand)
    r = math.fsum(best(x, cand) for x in ref) / len(ref)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


class TestEmbeddingMatrix:
    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix("m", 0, ("a",), np.array([[3.0, 4.0]]))

    def test_from_raw_normalizes(self):
        m = EmbeddingMatrix.from_raw("m", 0, ("a",), [[3.0, 4.0]])
        assert np.allclose(np.linalg.norm(m.vectors, axis=1), 1.0)

    def test_token_vector_count_mismatch(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix("m", 0, ("a", "b"), np.array([[1.0, 0.0]]))

    def test_negative_layer(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix("m", -1, (), np.zeros((0, 2)))


class TestGreedyMatch:
    def test_hand_example(self):
        cand = matrix([[1.0, 0.0], [0.0, 1.0]])
        ref = matrix([[1.0, 0.0]])
        s = greedy_match_score(cand, ref)
        assert s.precision == pytest.approx(0.5, abs=1e-12)
        assert s.recall == pytest.approx(1.0, abs=1e-12)
        assert s.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_self_match(self):
        m = matrix([[0.3, 0.4, 0.5], [0.9, -0.1, 0.2], [0.0, 1.0, 0.0]])
        s = greedy_match_score(m, m)
        assert s.precision == pytest.approx(1.0, abs=1e-9)
        assert s.recall == pytest.approx(1.0, abs=1e-9)
        assert s.f1 == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        s = greedy_match_score(matrix([[1.0, 0.0]]), matrix([[0.0, 1.0]]))
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_opposite_vectors_clamped_to_zero(self):
        s = greedy_match_score(matrix([[1.0, 0.0]]), matrix([[-1.0, 0.0]]))
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_empty_is_degenerate_zero(self):
        empty = EmbeddingMatrix("m", 0, (), np.zeros((0, 2)))
        s = greedy_match_score(empty, matrix([[1.0, 0.0]]))
        assert s.degenerate and s.precision == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            greedy_match_score(matrix([[1.0, 0.0]]), matrix([[1.0, 0.0, 0.0]]))

    def test_source_mismatch(self):
        with pytest.raises(ValueError, match="different sources"):
            greedy_match_score(matrix([[1.0, 0.0]], layer=1),
                               matrix([[1.0, 0.0]], layer=2))

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 10_000))
    @settings(max_examples=300, deadline=None)
    def test_matches_brute_force(self, nc, nr, dim, seed):
        rng = np.random.default_rng(seed)
        cand = matrix(rng.standard_normal((nc, dim)))
        ref = matrix(rng.standard_normal((nr, dim)))
        s = greedy_match_score(cand, ref)
        p, r, f1 = brute_force_greedy(cand.vectors, ref.vectors)
        assert s.precision == pytest.approx(p, abs=1e-12)
        assert s.recall == pytest.approx(r, abs=1e-12)
        assert s.f1 == pytest.approx(f1, abs=1e-12)

    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
    @settings(max_examples=200, deadline=None)
    def test_duality_exact(self, nc, nr, seed):
        rng = np.random.default_rng(seed)
        a = matrix(rng.standard_normal((nc, 4)))
        b = matrix(rng.standard_normal((nr, 4)))
        assert greedy_match_score(a, b).precision == greedy_match_score(b, a).recall
        assert greedy_match_score(a, b).f1 == greedy_match_score(b, a).f1

    @given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariance(self, nc, nr, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((nc, 5))
        b = rng.standard_normal((nr, 5))
        s1 = greedy_match_score(matrix(a), matrix(b))
        perm_a = rng.permutation(nc)
        perm_b = rng.permutation(nr)
        s2 = greedy_match_score(matrix(a[perm_a]), matrix(b[perm_b]))
        assert (s1.precision, s1.recall, s1.f1) == (s2.precision, s2.recall, s2.f1)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_duplicating_reference_token_monotone(self, nc, nr, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((nc, 3))
        b = rng.standard_normal((nr, 3))
        before = greedy_match_score(matrix(a), matrix(b)).precision
        b_dup = np.vstack([b, b[0]])
        after = greedy_match_score(matrix(a), matrix(b_dup)).precision
        assert after >= before - 1e-15


def segments(vectors, granularity="sentence"):
    vectors = np.asarray(vectors, dtype=np.float64)
    return [SegmentEmbedding(f"s{i}", v, granularity)
            for i, v in enumerate(normalize_rows(vectors))]


class TestStsPrf:
    def test_identity_singleton(self):
        a = segments([[1.0, 0.0]])
        s = sts_prf(a, a)
        assert s.precision == pytest.approx(1.0, abs=1e-12)
        assert s.f1 == pytest.approx(1.0, abs=1e-12)

    def test_document_granularity_collapses(self):
        a = segments([[1.0, 0.0]], "document")
        b = segments([[0.6, 0.8]], "document")
        s = sts_prf(a, b)
        assert s.precision == s.recall
        assert s.f1 == pytest.approx(s.precision, abs=1e-12)

    def test_orthogonal_reference_extra_segment(self):
        v1 = [1.0, 0.0]
        v2 = [0.0, 1.0]
        s = sts_prf(segments([v1]), segments([v1, v2]))
        assert s.precision == pytest.approx(1.0, abs=1e-12)
        assert s.recall == pytest.approx(0.75, abs=1e-12)

    def test_granularity_mismatch(self):
        with pytest.raises(ValueError, match="granularity"):
            sts_prf(segments([[1.0, 0.0]], "edu"), segments([[1.0, 0.0]], "sentence"))

    def test_empty_degenerate(self):
        s = sts_prf([], segments([[1.0, 0.0]]))
        assert s.degenerate and s.f1 == 0.0

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=150, deadline=None)
    def test_duality_exact(self, na, nb, seed):
        rng = np.random.default_rng(seed)
        a = segments(rng.standard_normal((na, 4)))
        b = segments(rng.standard_normal((nb, 4)))
        assert sts_prf(a, b).precision == sts_prf(b, a).recall
        assert sts_prf(a, b).f1 == sts_prf(b, a).f1

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_bounded(self, na, nb, seed):
        rng = np.random.default_rng(seed)
        s = sts_prf(segments(rng.standard_normal((na, 3))),
                    segments(rng.standard_normal((nb, 3))))
        assert 0.0 <= s.precision <= 1.0
        assert 0.0 <= s.recall <= 1.0
        assert 0.0 <= s.f1 <= 1.0

import math
import random
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffci.lexical import PrfScore, bleu, rouge_l, rouge_n

tokens = st.lists(st.sampled_from("abcdefg"), max_size=12)
nonempty_tokens = st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=12)


def recursive_lcs(a, b):
    """Naive recursive oracle, memoized only for speed."""
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


class TestPrfScore:
    def test_f1_formula(self):
        s = PrfScore.from_pr(0.5, 1.0)
        assert s.f1 == pytest.approx(2 / 3, abs=1e-12)

    def test_zero_zero_f1(self):
        assert PrfScore.from_pr(0.0, 0.0).f1 == 0.0

    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            PrfScore(1.5, 0.0, 0.0)


class TestRougeN:
    def test_hand_counted_unigrams(self):
        s = rouge_n(["the", "cat", "sat"], ["the", "cat"], 1)
        assert s.precision == pytest.approx(2 / 3, abs=1e-15)
        assert s.recall == 1.0
        assert s.f1 == pytest.approx(0.8, abs=1e-12)

    def test_identity(self):
        for n in (1, 2, 3):
            s = rouge_n(["a", "b", "c"], ["a", "b", "c"], n)
            assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        s = rouge_n(["x"], ["y"], 1)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_clipping(self):
        # "a" appears once in the reference, so only one candidate "a" matches
        s = rouge_n(["a", "a", "a"], ["a", "b"], 1)
        assert s.precision == pytest.approx(1 / 3, abs=1e-15)

    def test_empty_candidate(self):
        s = rouge_n([], ["a"], 1)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_n_longer_than_texts(self):
        s = rouge_n(["a"], ["a"], 2)
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 0)

    @given(tokens, tokens, st.integers(min_value=1, max_value=3))
    @settings(max_examples=300, deadline=None)
    def test_duality(self, a, b, n):
        assert rouge_n(a, b, n).precision == rouge_n(b, a, n).recall
        assert rouge_n(a, b, n).f1 == rouge_n(b, a, n).f1

    @given(tokens, tokens, st.integers(min_value=1, max_value=3))
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, a, b, n):
        s = rouge_n(a, b, n)
        assert 0.0 <= s.precision <= 1.0
        assert 0.0 <= s.recall <= 1.0
        assert 0.0 <= s.f1 <= 1.0

    @given(nonempty_tokens, nonempty_tokens)
    @settings(max_examples=100, deadline=None)
    def test_appending_matching_token_never_reduces_matches(self, cand, ref):
        def matches(c):
            total = len(c)
            return rouge_n(c, ref, 1).precision * total
        assert matches(cand + [ref[0]]) >= matches(cand) - 1e-12


class TestRougeL:
    def test_hand_dp_table(self):
        s = rouge_l(["a", "b", "c"], ["a", "c", "b"])
        assert s.precision == pytest.approx(2 / 3, abs=1e-15)
        assert s.recall == pytest.approx(2 / 3, abs=1e-15)

    def test_identity(self):
        s = rouge_l(["x", "y"], ["x", "y"])
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_empty_candidate(self):
        s = rouge_l([], ["a"])
        assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)

    @given(tokens, tokens)
    @settings(max_examples=300, deadline=None)
    def test_matches_recursive_oracle(self, a, b):
        from ffci.lexical import lcs_length
        assert lcs_length(a, b) == recursive_lcs(tuple(a), tuple(b))

    @given(tokens, tokens)
    @settings(max_examples=200, deadline=None)
    def test_duality(self, a, b):
        assert rouge_l(a, b).precision == rouge_l(b, a).recall
        assert rouge_l(a, b).f1 == rouge_l(b, a).f1


class TestBleu:
    def test_identity(self):
        cand = ["a", "b", "c", "d", "e"]
        assert bleu(cand, [cand], max_n=4) == 1.0

    def test_disjoint(self):
        assert bleu(["x", "x", "x", "x"], [["y", "y", "y", "y"]], max_n=4) == 0.0

    def test_add_one_derived_value(self):
        # p1 = 6/6, p2 = 4/5, brevity penalty exp(1 - 6/5)
        cand = ["the", "cat", "sat", "on", "mat"]
        ref = ["the", "cat", "sat", "on", "the", "mat"]
        expected = math.exp(1.0 - 6 / 5) * math.sqrt(4 / 5)
        assert bleu(cand, [ref], max_n=2, smoothing="add_one") == \
            pytest.approx(expected, abs=1e-12)

    def test_empty_candidate(self):
        assert bleu([], [["a"]]) == 0.0

    def test_requires_reference(self):
        with pytest.raises(ValueError):
            bleu(["a"], [])

    def test_brevity_penalty_only_when_shorter(self):
        # candidate longer than reference: no penalty
        assert bleu(["a", "b", "c"], [["a", "b"]], max_n=1) == pytest.approx(2 / 3)

    def test_short_candidate_caps_order(self):
        # candidate of length 2 cannot produce 4-grams; order capped, not zeroed
        assert bleu(["a", "b"], [["a", "b"]], max_n=4) == 1.0

    @given(tokens, nonempty_tokens, st.sampled_from(["none", "add_one"]))
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, cand, ref, smoothing):
        assert 0.0 <= bleu(cand, [ref], max_n=2, smoothing=smoothing) <= 1.0


class TestKernelParity:
    def test_backends_agree(self):
        import importlib
        from ffci._kernels import _pure
        try:
            native = importlib.import_module("ffci._kernels._native")
        except ImportError:
            pytest.skip("compiled kernels unavailable")
        import numpy as np
        rng = random.Random(7)
        for _ in range(300):
            a = [rng.randrange(6) for _ in range(rng.randrange(0, 15))]
            b = [rng.randrange(6) for _ in range(rng.randrange(0, 15))]
            assert native.lcs_length(np.asarray(a, np.int32), np.asarray(b, np.int32)) \
                == _pure.lcs_length(a, b)
            for n in (1, 2, 3, 4):
                assert native.clipped_ngram_matches(
                    np.asarray(a, np.int32), np.asarray(b, np.int32), n) \
                    == _pure.clipped_ngram_matches(a, b, n)

    def test_large_order_falls_back(self):
        from ffci import _kernels
        # n = 5 exceeds the packed-key width; wrapper must still answer
        assert _kernels.clipped_ngram_matches([1, 2, 3, 4, 5], [1, 2, 3, 4, 5], 5) == 1

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from choicelab.core import (ChoiceContext, Parameters, choice_probabilities,
                            gumbel_from_uniform, gumbel_max_choice, sample_choice, softmax,
                            systematic_utility)
from choicelab.errors import InvalidInputError, NumericError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def ctx_with_utilities(v):
    """Context whose single attribute equals the desired utility under beta = 1."""
    v = np.asarray(v, dtype=float)
    return ChoiceContext(np.arange(v.size), v[:, None]), Parameters([1.0])


class TestSystematicUtility:
    def test_zero_attributes(self):
        assert systematic_utility([0, 0, 0], Parameters([1, -2, 3])) == 0.0

    def test_dot_product(self):
        assert systematic_utility([1, 2], Parameters([0.5, -1])) == -1.5

    @given(st.lists(finite, min_size=1, max_size=6))
    def test_null_parameters(self, x):
        assert systematic_utility(x, Parameters(np.zeros(len(x)))) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            systematic_utility([1, 2, 3], Parameters([1, 2]))


class TestParameters:
    def test_mu_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            Parameters([1.0], mu=0.0)

    def test_default_scale_is_one(self):
        assert Parameters([1.0]).mu == 1.0


class TestChoiceContext:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(InvalidInputError):
            ChoiceContext([1, 1], np.zeros((2, 1)))

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            ChoiceContext([], np.zeros((0, 1)))

    def test_row_count_must_match(self):
        with pytest.raises(InvalidInputError):
            ChoiceContext([0, 1], np.zeros((3, 1)))


class TestChoiceProbabilities:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(choice_probabilities(*ctx_with_utilities([0, 0])), [0.5, 0.5])

    def test_log_two(self):
        p = choice_probabilities(*ctx_with_utilities([math.log(2), 0]))
        np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=0, atol=1e-15)

    def test_single_alternative(self):
        assert choice_probabilities(*ctx_with_utilities([3.7])).tolist() == [1.0]

    def test_large_utilities_are_safe(self):
        p = softmax([800.0, 799.0, -900.0])
        e = 1 / (1 + math.exp(-1))
        np.testing.assert_allclose(p[:2], [e, 1 - e], rtol=1e-12)
        assert np.all(np.isfinite(p))

    def test_non_finite_utility(self):
        with pytest.raises(NumericError):
            softmax([0.0, np.inf])

    @given(st.lists(finite, min_size=1, max_size=8), st.floats(-100, 100))
    def test_shift_invariance(self, v, c):
        p = softmax(v)
        q = softmax(np.asarray(v) + c)
        np.testing.assert_allclose(q, p, rtol=1e-12, atol=1e-300)

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
    def test_positive_and_normalised(self, v):
        p = softmax(v)
        assert np.all(p > 0)
        assert abs(p.sum() - 1) <= 1e-12

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.integers(0, 5),
           st.floats(0.01, 5))
    def test_monotone_in_own_utility(self, v, i, bump):
        i = i % len(v)
        p = softmax(v)
        w = np.array(v, dtype=float)
        w[i] += bump
        q = softmax(w)
        assert q[i] > p[i]
        others = np.arange(len(v)) != i
        assert np.all(q[others] <= p[others])


class TestSampleChoice:
    def test_degenerate(self):
        rng = np.random.default_rng(0)
        assert all(sample_choice([1.0], rng) == 0 for _ in range(100))
        assert all(sample_choice([1.0, 0.0], rng) == 0 for _ in range(1000))

    def test_fair_coin(self):
        rng = np.random.default_rng(1)
        hits = sum(sample_choice([0.5, 0.5], rng) == 0 for _ in range(100_000))
        assert 0.49 <= hits / 100_000 <= 0.51

    def test_deterministic_given_state(self):
        draws = [[sample_choice([0.2, 0.3, 0.5], np.random.default_rng(9)) for _ in range(5)]
                 for _ in range(2)]
        assert draws[0] == draws[1]

    @pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]])
    def test_invalid(self, probs):
        with pytest.raises(InvalidInputError):
            sample_choice(probs, np.random.default_rng(0))


class TestGumbelMax:
    def test_transform(self):
        u = np.array([math.exp(-1), math.exp(-math.exp(-2.0))])
        np.testing.assert_allclose(gumbel_from_uniform(u), [0.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(gumbel_from_uniform(u, mu=2.0), [0.0, 1.0], atol=1e-12)

    def test_single_alternative(self):
        ctx, params = ctx_with_utilities([1.0])
        assert gumbel_max_choice(ctx, params, np.random.default_rng(0)) == 0

    def test_symmetric_frequencies(self):
        ctx, params = ctx_with_utilities([0.0, 0.0])
        rng = np.random.default_rng(2)
        hits = sum(gumbel_max_choice(ctx, params, rng) == 0 for _ in range(100_000))
        assert 0.49 <= hits / 100_000 <= 0.51

    def test_dominant_alternative(self):
        ctx, params = ctx_with_utilities([10.0, 0.0])
        p0 = math.exp(10) / (math.exp(10) + 1)
        assert abs(choice_probabilities(ctx, params)[0] - p0) < 1e-15
        assert round(p0, 7) == 0.9999546
        rng = np.random.default_rng(3)
        hits = sum(gumbel_max_choice(ctx, params, rng) == 0 for _ in range(100_000))
        assert hits / 100_000 >= 0.9998

    def test_matches_logit_chi_square(self):
        v = np.array([0.4, -0.3, 1.1, 0.0, -1.5])
        ctx, params = ctx_with_utilities(v)
        rng = np.random.default_rng(4)
        n = 100_000
        counts = np.bincount([gumbel_max_choice(ctx, params, rng) for _ in range(n)],
                             minlength=v.size)
        expected = n * choice_probabilities(ctx, params)
        assert stats.chisquare(counts, expected).pvalue > 1e-3

    def test_scale_matches_logit_scale(self):
        v = np.array([0.5, 0.0, -0.5])
        ctx = ChoiceContext(np.arange(3), v[:, None])
        params = Parameters([1.0], mu=2.0)
        rng = np.random.default_rng(5)
        n = 50_000
        counts = np.bincount([gumbel_max_choice(ctx, params, rng) for _ in range(n)],
                             minlength=3)
        assert stats.chisquare(counts, n * softmax(v, 2.0)).pvalue > 1e-3

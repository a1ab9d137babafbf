import itertools
import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choicelab.core import ChoiceContext, Parameters, softmax
from choicelab.corrections import (CorrectionTerms, EmpiricalFrequency, ExactCorrection,
                                   KnownImportance, NoCorrection, UniformConditioning,
                                   corrected_probabilities, correction_terms,
                                   importance_sample_log_prob, is_uniform_conditioning,
                                   random_sample_log_prob)
from choicelab.errors import InvalidConfigError, InvalidInputError, NumericError
from choicelab.scenario import ScenarioConfig, generate
from choicelab.sets import SufficientSet, build_pph


def two_member_set(counts=(3, 1)):
    return SufficientSet(0, [0, 1], list(counts), 0, False, "pph")


def enumerate_augmented_counts(q, R):
    """Exact law of the count vector (draws plus the chosen instance) given each choice."""
    J = len(q)
    law = defaultdict(float)
    for draws in itertools.product(range(J), repeat=R):
        p = math.prod(q[d] for d in draws)
        base = np.bincount(np.asarray(draws, dtype=int), minlength=J)
        for i in range(J):
            n = base.copy()
            n[i] += 1
            law[tuple(n), i] += p
    return law


class TestTerms:
    def test_none(self):
        assert correction_terms(NoCorrection(), two_member_set()).values.tolist() == [0.0, 0.0]

    def test_uniform(self):
        assert correction_terms(UniformConditioning(), two_member_set()).values.tolist() == [0, 0]

    def test_known_importance(self):
        t = correction_terms(KnownImportance([0, 1], [0.5, 0.5]), two_member_set())
        np.testing.assert_allclose(t.values, [math.log(6), math.log(2)], rtol=1e-15)
        assert not t.beta_dependent

    def test_exact_equal_utilities(self):
        ctx = ChoiceContext([0, 1], [[0.3], [0.3]])
        t = correction_terms(ExactCorrection.from_oracle(ctx, Parameters([2.0])),
                             two_member_set())
        np.testing.assert_allclose(t.values, [math.log(6), math.log(2)], rtol=1e-15)
        assert t.beta_dependent

    @given(st.lists(st.integers(1, 50), min_size=1, max_size=6))
    def test_empirical_is_zero(self, counts):
        s = SufficientSet(0, list(range(len(counts))), counts, 0, False, "pph")
        assert correction_terms(EmpiricalFrequency(), s).values.tolist() == [0.0] * len(counts)

    def test_exact_without_oracle(self):
        with pytest.raises(InvalidConfigError):
            correction_terms(ExactCorrection(), two_member_set())

    def test_exact_member_outside_consideration(self):
        ctx = ChoiceContext([0, 2], [[0.0], [0.0]])
        with pytest.raises(InvalidInputError):
            correction_terms(ExactCorrection.from_oracle(ctx, Parameters([1.0])),
                             two_member_set())

    def test_zero_count_rejected(self):
        s = SufficientSet(0, [0, 1], [1, 0], 0, False, "pph")
        for spec in (EmpiricalFrequency(), KnownImportance([0, 1], [0.5, 0.5])):
            with pytest.raises(InvalidInputError):
                correction_terms(spec, s)

    def test_missing_selection_probability(self):
        with pytest.raises(InvalidInputError):
            correction_terms(KnownImportance([0, 5], [0.5, 0.5]), two_member_set())

    def test_non_finite_terms(self):
        with pytest.raises(NumericError):
            CorrectionTerms([0.0, np.inf])


class TestImportanceProtocolOracle:
    """Known-importance terms against exhaustive enumeration of the sampling protocol."""

    q = [0.5, 0.3, 0.2]
    R = 4

    def test_log_prob_matches_enumeration(self):
        law = enumerate_augmented_counts(self.q, self.R)
        for (n, i), p in law.items():
            assert math.isclose(math.exp(importance_sample_log_prob(n, i, self.q)), p,
                                rel_tol=1e-12)

    def test_term_differences_match_enumeration(self):
        law = enumerate_augmented_counts(self.q, self.R)
        spec = KnownImportance([0, 1, 2], self.q)
        for n in {k[0] for k in law}:
            members = [j for j in range(3) if n[j] > 0]
            s = SufficientSet(0, members, [n[j] for j in members], members[0], False,
                              "importance_sample")
            c = correction_terms(spec, s).values
            for a, b in itertools.combinations(range(len(members)), 2):
                exact = math.log(law[n, members[a]]) - math.log(law[n, members[b]])
                assert math.isclose(c[a] - c[b], exact, rel_tol=1e-12, abs_tol=1e-12)


class TestRandomSampleUniformity:
    def test_log_prob(self):
        assert math.isclose(random_sample_log_prob(50, 5), -math.log(math.comb(49, 4)),
                            rel_tol=1e-12)
        assert random_sample_log_prob(7, 1) == 0.0

    def test_same_for_every_member(self):
        # enumerate: P(D | j) is 1 / C(J-1, k-1) for every j in D
        J, k = 6, 3
        for D in itertools.combinations(range(J), k):
            for j in D:
                others = [a for a in range(J) if a != j]
                hits = sum(1 for pick in itertools.combinations(others, k - 1)
                           if set(pick) | {j} == set(D))
                p = hits / math.comb(J - 1, k - 1)
                assert math.isclose(math.log(p), random_sample_log_prob(J, k), rel_tol=1e-12)


class TestCorrectedProbabilities:
    def test_zero_terms_give_plain_logit(self):
        v = np.array([0.2, -1.0, 0.7])
        np.testing.assert_array_equal(corrected_probabilities(v, np.zeros(3)), softmax(v))

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            corrected_probabilities([0.0, 1.0], [0.0])

    def test_non_finite(self):
        with pytest.raises(NumericError):
            corrected_probabilities([0.0, np.nan], [0.0, 0.0])

    @settings(max_examples=200)
    @given(st.lists(st.floats(-20, 20), min_size=1, max_size=6), st.floats(-10, 10),
           st.integers(0, 2**32 - 1))
    def test_shift_invariance(self, v, c, seed):
        terms = CorrectionTerms(np.random.default_rng(seed).normal(size=len(v)))
        p = corrected_probabilities(v, terms)
        q = corrected_probabilities(v, terms.shifted(c))
        np.testing.assert_allclose(q, p, rtol=1e-12, atol=1e-300)

    def test_exact_correction_degenerates_to_count_shares(self):
        rng = np.random.default_rng(21)
        worst = 0.0
        for _ in range(100):
            J, K = int(rng.integers(2, 9)), 3
            alts = np.sort(rng.choice(20, size=J, replace=False))
            x = rng.normal(size=(J, K))
            beta = rng.normal(scale=2.0, size=K)
            ctx = ChoiceContext(alts, x)
            m = int(rng.integers(1, J + 1))
            pick = np.sort(rng.choice(J, size=m, replace=False))
            counts = rng.integers(1, 30, size=m)
            s = SufficientSet(0, alts[pick], counts, alts[pick[0]], False, "pph")
            terms = correction_terms(ExactCorrection.from_oracle(ctx, Parameters(beta)), s)
            p = corrected_probabilities(x[pick] @ beta, terms)
            worst = max(worst, np.abs(p - counts / counts.sum()).max())
        assert worst < 1e-10


class TestUniformConditioning:
    def test_zeros(self):
        assert is_uniform_conditioning(np.zeros(4))

    def test_unequal(self):
        assert not is_uniform_conditioning([math.log(6), math.log(2)])

    @given(st.floats(-1e3, 1e3), st.integers(1, 5))
    def test_constant(self, c, m):
        assert is_uniform_conditioning(CorrectionTerms(np.full(m, c)))


def test_exact_spread_shrinks_like_inverse_root_r():
    """Zero drift: the exact terms ln(n_j / P_j) flatten at the sampling-error rate.

    Each term is ln(R+1) plus a sampling error of order 1/sqrt(P_j (R+1)), so a
    25-fold longer history shrinks the median spread about 5-fold.
    """
    spreads = {}
    for R in (400, 10_000):
        c = ScenarioConfig(N=200, J=12, K=3, consideration_size=5, R=R,
                           beta_true=(1.0, -0.5, 0.5), seed=17)
        h = generate(c)
        vals = []
        for e in h.individuals:
            members = e.consideration_set
            ctx = ChoiceContext(members, e.base_attributes[members])
            terms = correction_terms(ExactCorrection.from_oracle(ctx, Parameters(h.beta_true)),
                                     build_pph(e))
            vals.append(terms.spread)
        spreads[R] = float(np.median(vals))
    assert 4.0 < spreads[400] / spreads[10_000] < 6.5

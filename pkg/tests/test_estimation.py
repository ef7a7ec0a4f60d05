import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import beta_posterior_mean
from unlearn_verify.core import OutcomeVector, Strategy, TestPlan, deletion_confidence
from unlearn_verify.errors import DomainError, UsageError
from unlearn_verify.estimation import (
    PosteriorGrid,
    RateEstimate,
    RateSource,
    conservative_confidence,
    estimate_rate,
    expected_confidence,
    expected_confidence_from_estimates,
    posterior,
)

PLAN = TestPlan(30, 1e-3)


class TestRateEstimate:
    def test_mean_is_exact(self):
        est = estimate_rate(OutcomeVector([1, 1, 1, 0, 0]))
        assert est.r_hat == Fraction(3, 5)
        assert est.source is RateSource.POST_TRAINING_QUERY

    def test_all_zero(self):
        est = estimate_rate(OutcomeVector(np.zeros(7)), RateSource.ALTERNATE_PATTERN_QUERY)
        assert est.r_hat == 0
        assert est.source is RateSource.ALTERNATE_PATTERN_QUERY

    def test_concentration(self):
        rng = np.random.default_rng(np.random.SeedSequence(8))
        est = estimate_rate(OutcomeVector(rng.random(10 ** 6) < 0.8))
        assert abs(float(est.r_hat) - 0.8) <= 0.002

    def test_empty(self):
        with pytest.raises(UsageError):
            estimate_rate(OutcomeVector([]))

    def test_parse(self):
        assert RateEstimate.parse("28/30") == RateEstimate(28, 30)
        assert RateEstimate.parse("0.8", 30) == RateEstimate(24, 30)
        with pytest.raises(UsageError):
            RateEstimate.parse("0.81", 30)
        with pytest.raises(UsageError):
            RateEstimate.parse("0.5")
        with pytest.raises(DomainError):
            RateEstimate(5, 4)


class TestConservative:
    def test_widening_lowers_confidence(self):
        loose = conservative_confidence(PLAN, 0.15, 0.90)
        tight = deletion_confidence(PLAN, Strategy(q=0.1098, p=0.9560))
        assert loose.rho <= tight.rho

    def test_idempotent(self):
        assert conservative_confidence(PLAN, 0.1098, 0.9560) == deletion_confidence(
            PLAN, Strategy(q=0.1098, p=0.9560))

    def test_collapsed(self):
        res = conservative_confidence(PLAN, 0.5, 0.5)
        assert res.degenerate and res.rho <= 1e-3

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=100, deadline=None)
    def test_monotone(self, q, dq, p, dp):
        q2 = q + (1 - q) * dq
        p2 = p * dp
        assert conservative_confidence(PLAN, q2, p2).rho <= conservative_confidence(PLAN, q, p).rho


class TestPosterior:
    def test_hand_computed(self):
        post = posterior(RateEstimate(1, 1), PosteriorGrid.uniform(2))
        np.testing.assert_allclose(post.mass, [0, 1 / 3, 2 / 3], rtol=1e-15, atol=1e-300)
        assert post.normalized

    def test_concentrates_at_zero(self):
        post = posterior(RateEstimate(0, 5000), PosteriorGrid.uniform(100))
        assert post.mass[0] > 0.99

    def test_laplace_rule(self):
        post = posterior(RateEstimate.parse("0.8", 30), PosteriorGrid.uniform(1000))
        assert abs(post.mean() - float(beta_posterior_mean(24, 30))) <= 1e-3
        assert beta_posterior_mean(24, 30) == Fraction(25, 32)

    def test_grid_error_shrinks_with_grid(self):
        want = float(beta_posterior_mean(3, 30))
        errs = [abs(posterior(RateEstimate(3, 30), PosteriorGrid.uniform(g)).mean() - want)
                for g in (50, 200, 1000)]
        assert errs[0] > errs[1] > errs[2]

    def test_unnormalized_prior(self):
        bad = PosteriorGrid(np.array([0.0, 1.0]), np.array([0.3, 0.3]))
        with pytest.raises(UsageError):
            posterior(RateEstimate(1, 2), bad)

    def test_impossible_observation(self):
        with pytest.raises(UsageError):
            posterior(RateEstimate(1, 2), PosteriorGrid.point(0.0))

    def test_round_trip(self):
        post = posterior(RateEstimate(3, 30), PosteriorGrid.uniform(20))
        again = PosteriorGrid.from_dict(post.to_dict())
        assert np.array_equal(again.mass, post.mass)
        assert np.array_equal(again.support, post.support)


class TestExpectedConfidence:
    def test_point_masses_bitwise(self):
        got = expected_confidence(PLAN, PosteriorGrid.point(0.1098), PosteriorGrid.point(0.9560))
        assert got == deletion_confidence(PLAN, Strategy(q=0.1098, p=0.9560)).rho

    def test_two_point_mixture(self):
        p_post = PosteriorGrid(np.array([0.7, 0.9]), np.array([0.5, 0.5]))
        got = expected_confidence(PLAN, PosteriorGrid.point(0.1), p_post)
        a = deletion_confidence(PLAN, Strategy(q=0.1, p=0.7)).rho
        b = deletion_confidence(PLAN, Strategy(q=0.1, p=0.9)).rho
        assert got == pytest.approx((a + b) / 2, rel=1e-15)

    def test_convex_combination(self):
        q_post = posterior(RateEstimate(3, 30), PosteriorGrid.uniform(40))
        p_post = posterior(RateEstimate(20, 30), PosteriorGrid.uniform(40))
        got = expected_confidence(PLAN, q_post, p_post)
        rhos = [deletion_confidence(PLAN, Strategy(q=float(q), p=float(p))).rho
                for q in q_post.support for p in p_post.support]
        assert min(rhos) <= got <= max(rhos)

    def test_matches_monte_carlo_over_grid(self):
        prior = PosteriorGrid.uniform(200)
        q_post = posterior(RateEstimate(3, 30), prior)
        p_post = posterior(RateEstimate(28, 30), prior)
        got = expected_confidence(PLAN, q_post, p_post)
        assert 0.0 < got < 1.0
        rng = np.random.default_rng(np.random.SeedSequence(10))
        draws = 100_000
        qi = rng.choice(q_post.support.size, size=draws, p=q_post.mass)
        pj = rng.choice(p_post.support.size, size=draws, p=p_post.mass)
        cache = {}
        vals = np.empty(draws)
        for t, (i, j) in enumerate(zip(qi.tolist(), pj.tolist())):
            key = (i, j)
            if key not in cache:
                cache[key] = deletion_confidence(
                    PLAN, Strategy(q=float(q_post.support[i]), p=float(p_post.support[j]))).rho
            vals[t] = cache[key]
        sigma = vals.std(ddof=1) / math.sqrt(draws)
        assert abs(vals.mean() - got) <= 3 * sigma

    def test_from_estimates(self):
        got = expected_confidence_from_estimates(PLAN, RateEstimate(3, 30), RateEstimate(28, 30))
        assert 0.999 < got < 1.0

"""User-side estimates of the backdoor rates and what to do with them.

A single user rarely knows ``p`` and ``q`` precisely. Two remedies are
provided: plug conservative bounds into the exact test, or put a discrete
prior on each rate, update it with the observed counts and average the
deletion confidence over the resulting posteriors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .core import Strategy, check_probability, deletion_confidence, power_from_log_beta
from .errors import DomainError, UsageError

DEFAULT_GRID_SIZE = 1000


class RateSource(str, enum.Enum):
    POST_TRAINING_QUERY = "PostTrainingQuery"
    PRE_UPLOAD_QUERY = "PreUploadQuery"
    ALTERNATE_PATTERN_QUERY = "AlternatePatternQuery"


@dataclass(frozen=True)
class RateEstimate:
    """Measured success rate, kept as an exact count over ``n_obs`` queries."""

    count: int
    n_obs: int
    source: RateSource = RateSource.POST_TRAINING_QUERY

    def __post_init__(self):
        if self.n_obs < 1:
            raise UsageError("a rate estimate needs at least one observation")
        if not (0 <= self.count <= self.n_obs):
            raise DomainError(f"count {self.count} outside [0, {self.n_obs}]")
        object.__setattr__(self, "source", RateSource(self.source))

    @property
    def r_hat(self):
        return Fraction(self.count, self.n_obs)

    @classmethod
    def parse(cls, text, n_obs=None, source=RateSource.POST_TRAINING_QUERY):
        """Build from ``"28/30"`` or from a decimal plus ``n_obs``."""
        text = str(text).strip()
        if "/" in text:
            num, den = text.split("/", 1)
            return cls(int(num), int(den), source)
        if n_obs is None:
            raise UsageError(f"decimal rate {text!r} needs an observation count")
        frac = Fraction(text) * n_obs
        if frac.denominator != 1:
            raise UsageError(f"rate {text} is not a whole count out of {n_obs}")
        return cls(int(frac), int(n_obs), source)


def estimate_rate(outcomes, source=RateSource.POST_TRAINING_QUERY):
    if len(outcomes) == 0:
        raise UsageError("cannot estimate a rate from zero queries")
    return RateEstimate(outcomes.count, len(outcomes), source)


def conservative_confidence(plan, q_upper, p_lower):
    """Deletion confidence at pessimistic rates.

    For any true ``q <= q_upper`` and ``p >= p_lower`` the returned ``rho``
    never exceeds the true one, so it is safe to report.
    """
    return deletion_confidence(plan, Strategy(q=q_upper, p=p_lower))


@dataclass(frozen=True)
class PosteriorGrid:
    """Discrete distribution over ``G + 1`` equispaced rates in [0, 1]."""

    support: np.ndarray
    mass: np.ndarray
    prior_name: str = "uniform"

    def __post_init__(self):
        support = np.array(self.support, dtype=np.float64)
        mass = np.array(self.mass, dtype=np.float64)
        if support.ndim != 1 or support.shape != mass.shape or support.size < 1:
            raise UsageError("support and mass must be equal-length 1-D arrays")
        if np.any(np.diff(support) <= 0):
            raise UsageError("support must be strictly increasing")
        if support[0] < 0 or support[-1] > 1:
            raise DomainError("support must lie in [0, 1]")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise UsageError("mass must be finite and nonnegative")
        support.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    @property
    def grid_size(self):
        return self.support.size - 1

    @property
    def normalized(self):
        return abs(math.fsum(self.mass) - 1.0) <= 1e-12

    def mean(self):
        return math.fsum(self.support * self.mass)

    @classmethod
    def uniform(cls, grid_size=DEFAULT_GRID_SIZE):
        if grid_size < 1:
            raise DomainError("grid_size must be >= 1")
        support = np.arange(grid_size + 1) / grid_size
        return cls(support, np.full(grid_size + 1, 1.0 / (grid_size + 1)), "uniform")

    @classmethod
    def point(cls, rate):
        return cls(np.array([check_probability(rate, "rate")]), np.array([1.0]), "point")

    def to_dict(self):
        return {"prior": self.prior_name, "grid_size": self.grid_size,
                "support": self.support.tolist(), "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["support"]), np.asarray(data["mass"]),
                   data.get("prior", "custom"))


def _log_likelihood(count, n_obs, rates):
    out = np.empty(rates.size)
    for i, r in enumerate(rates):
        out[i] = kernels.log_pmf(count, n_obs, float(r))
    return out


def posterior(estimate, prior):
    """Bayes update of ``prior`` by ``estimate.count`` successes in ``n_obs``."""
    if not prior.normalized:
        raise UsageError("prior mass must sum to 1")
    with np.errstate(divide="ignore"):
        log_post = np.log(prior.mass) + _log_likelihood(estimate.count, estimate.n_obs,
                                                        prior.support)
    top = np.max(log_post)
    if top == -np.inf:
        raise UsageError("observed count is impossible under every prior support point")
    weights = np.exp(log_post - top)
    # evidence Pr[r_hat | n] is the grid sum; normalize by it
    mass = weights / math.fsum(weights)
    return PosteriorGrid(prior.support, mass, prior.prior_name)


def expected_confidence(plan, q_post, p_post):
    """Posterior expectation of the deletion confidence.

    ``q`` and ``p`` are taken as independent, so the expectation is the double
    sum of ``rho(q_i, p_j)`` weighted by the product of posterior masses.
    Support points without mass are skipped.
    """
    if not (q_post.normalized and p_post.normalized):
        raise UsageError("posteriors must be normalized")
    qi = np.flatnonzero(q_post.mass)
    pj = np.flatnonzero(p_post.mass)
    q_rates = q_post.support[qi]
    q_mass = q_post.mass[qi]
    p_rates = p_post.support[pj]
    p_mass = p_post.mass[pj]

    thresholds = kernels.thresholds_many(plan.n, plan.log_alpha, q_rates)
    inner = np.empty(q_rates.size)
    for k in np.unique(thresholds):
        # the shared helper keeps rho bitwise equal to TestResult.rho
        rho = np.array([power_from_log_beta(x, int(k), plan.n, r) for x, r in
                        zip(kernels.log_cdf_many(int(k), plan.n, p_rates), p_rates.tolist())])
        inner[thresholds == k] = math.fsum(p_mass * rho)
    return math.fsum(q_mass * inner)


def expected_confidence_from_estimates(plan, q_hat, p_hat, grid_size=DEFAULT_GRID_SIZE):
    prior = PosteriorGrid.uniform(grid_size)
    return expected_confidence(plan, posterior(q_hat, prior), posterior(p_hat, prior))


__all__ = [
    "DEFAULT_GRID_SIZE", "PosteriorGrid", "RateEstimate", "RateSource",
    "conservative_confidence", "estimate_rate", "expected_confidence",
    "expected_confidence_from_estimates", "posterior",
]

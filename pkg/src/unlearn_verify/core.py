"""Exact rescaled-binomial hypothesis test for deletion verification.

A user who poisoned their data with a backdoor queries the model ``n`` times
with triggered samples. Each query succeeds independently with probability
``q`` if the server deleted the data (H0) or ``p`` if it did not (H1). The
count of successes is Binomial(n, r); the test rejects H0 when the count
exceeds a threshold chosen so the false-accusation rate stays within alpha.

All tail masses are carried as natural logs so Type II errors far below the
double-precision underflow point of a naive summation remain representable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import DegenerateStrategyError, DomainError, UsageError

PRNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence"


def check_probability(value, name="probability"):
    """Return ``value`` as a float in [0, 1] or raise DomainError."""
    if isinstance(value, bool):
        raise DomainError(f"{name} must be a number, got bool")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a number, got {value!r}") from None
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return x


def _check_count(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


@dataclass(frozen=True)
class Strategy:
    """Backdoor success probabilities: ``q`` if deleted, ``p`` if retained."""

    q: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "q", check_probability(self.q, "q"))
        object.__setattr__(self, "p", check_probability(self.p, "p"))

    @property
    def degenerate(self):
        return self.p <= self.q


@dataclass(frozen=True)
class TestPlan:
    """Number of backdoored verification queries and the tolerated Type I error."""

    __test__ = False

    n: int
    alpha: float

    def __post_init__(self):
        _check_count(self.n, "n", minimum=1)
        object.__setattr__(self, "n", int(self.n))
        alpha = check_probability(self.alpha, "alpha")
        if not (0.0 < alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def log_alpha(self):
        return math.log(self.alpha)


LOG_HALF = math.log(0.5)


def power_from_log_beta(log_beta, k, n, p):
    """``rho = 1 - beta`` without cancellation.

    When ``beta`` is close to 1 the difference loses every digit, so the
    upper tail ``P_p[X > k]`` is summed directly instead.
    """
    if log_beta <= LOG_HALF:
        return -math.expm1(log_beta)
    return math.exp(kernels.log_sf(k, n, p))


@dataclass(frozen=True)
class TestResult:
    """Outcome of evaluating one plan against one strategy.

    ``threshold_k`` is the largest success count that still accepts H0.
    ``vacuous`` marks plans whose threshold equals ``n`` (H0 can never be
    rejected); ``degenerate`` marks strategies with ``p <= q``.
    """

    __test__ = False

    plan: TestPlan
    strategy: Strategy
    threshold_k: int
    achieved_alpha: float
    log_beta: float
    beta: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", math.exp(self.log_beta))
        object.__setattr__(self, "rho", power_from_log_beta(
            self.log_beta, self.threshold_k, self.plan.n, self.strategy.p))

    @property
    def threshold_t(self):
        return Fraction(self.threshold_k, self.plan.n)

    @property
    def degenerate(self):
        return self.strategy.degenerate

    @property
    def vacuous(self):
        return self.threshold_k >= self.plan.n

    def to_dict(self):
        return {
            "n": self.plan.n,
            "alpha": self.plan.alpha,
            "q": self.strategy.q,
            "p": self.strategy.p,
            "threshold_k": self.threshold_k,
            "threshold_t": str(self.threshold_t),
            "achieved_alpha": self.achieved_alpha,
            "log_beta": self.log_beta,
            "beta": self.beta,
            "rho": self.rho,
            "degenerate": self.degenerate,
            "vacuous": self.vacuous,
        }


class Decision(str, enum.Enum):
    ACCEPT_H0 = "AcceptH0"
    REJECT_H0 = "RejectH0"


@dataclass(frozen=True)
class OutcomeVector:
    """Successes (1) and failures (0) of ``n`` backdoored queries."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size and bits.max() > 1:
            raise DomainError("outcome bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return int(self.bits.size)

    @property
    def n(self):
        return int(self.bits.size)

    @property
    def count(self):
        return int(self.bits.sum())

    @property
    def r_hat(self):
        if not self.bits.size:
            raise UsageError("empty outcome vector has no success rate")
        return Fraction(self.count, self.n)

    def __eq__(self, other):
        if not isinstance(other, OutcomeVector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def draw_outcomes(n, r, rng):
    """Draw one ``OutcomeVector`` of ``n`` Bernoulli(``r``) queries.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    n = _check_count(n, "n", minimum=1)
    r = check_probability(r, "r")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(np.random.SeedSequence(int(rng)))
    return OutcomeVector(rng.random(n) < r)


def binom_log_pmf(k, n, r):
    n = _check_count(n, "n")
    k = _check_count(k, "k")
    if k > n:
        raise DomainError(f"k={k} exceeds n={n}")
    return kernels.log_pmf(k, n, check_probability(r, "r"))


def binom_cdf(k, n, r):
    """P[X <= k] for X ~ Binomial(n, r)."""
    n = _check_count(n, "n")
    k = _check_count(k, "k")
    if k > n:
        raise DomainError(f"k={k} exceeds n={n}")
    r = check_probability(r, "r")
    if k == n:
        return 1.0
    return min(1.0, math.exp(kernels.log_cdf(k, n, r)))


def success_rate_std(n, r):
    n = _check_count(n, "n", minimum=1)
    r = check_probability(r, "r")
    return math.sqrt(r * (1.0 - r)) / math.sqrt(n)


def threshold_for_alpha(plan, q):
    """Acceptance threshold for a level-``alpha`` test against H0 rate ``q``.

    Returns ``(threshold_k, achieved_alpha)`` where ``threshold_k`` is the
    smallest count whose upper tail ``P_q[X > k]`` is at most alpha, and
    ``achieved_alpha`` is that tail. Counts up to ``threshold_k`` accept H0.
    """
    q = check_probability(q, "q")
    k = int(kernels.threshold(plan.n, plan.log_alpha, q))
    achieved = math.exp(kernels.log_sf(k, plan.n, q)) if k < plan.n else 0.0
    # the search proved sf <= alpha in log space; exp may round one ulp above
    return k, min(achieved, plan.alpha)


def beta_error(plan, s):
    """Natural log of the Type II error of ``plan`` under strategy ``s``."""
    return kernels.log_beta(plan.n, plan.log_alpha, s.q, s.p)


def deletion_confidence(plan, s):
    """Evaluate the test; ``rho`` is the deletion confidence ``1 - beta``."""
    k, achieved = threshold_for_alpha(plan, s.q)
    log_beta = kernels.log_cdf(k, plan.n, s.p)
    return TestResult(plan=plan, strategy=s, threshold_k=k,
                      achieved_alpha=achieved, log_beta=log_beta)


def decide(outcomes, plan, q):
    if len(outcomes) != plan.n:
        raise UsageError(f"expected {plan.n} outcomes, got {len(outcomes)}")
    k, _ = threshold_for_alpha(plan, q)
    return Decision.ACCEPT_H0 if outcomes.count <= k else Decision.REJECT_H0


def samples_needed(s, alpha, rho_target, n_max):
    """Smallest ``n <= n_max`` whose deletion confidence reaches ``rho_target``.

    Scans every ``n``: the confidence is not monotone in ``n`` because the
    threshold moves in integer steps. Returns None when no ``n`` qualifies.
    """
    if s.degenerate:
        raise DegenerateStrategyError(f"p={s.p} <= q={s.q}: no sample size separates them")
    rho_target = check_probability(rho_target, "rho_target")
    if not (0.0 < rho_target < 1.0):
        raise DomainError("rho_target must lie in (0, 1)")
    n_max = _check_count(n_max, "n_max", minimum=1)
    log_beta_target = math.log1p(-rho_target)
    log_alpha = math.log(TestPlan(1, alpha).alpha)
    for n in range(1, n_max + 1):
        if kernels.log_beta(n, log_alpha, s.q, s.p) <= log_beta_target:
            return n
    return None


def log_beta_to_paper(log_beta, digits=2):
    """Format ``exp(log_beta)`` as ``"3.2e-22"`` without leaving log space."""
    if log_beta == -math.inf:
        return "0"
    log10 = log_beta / math.log(10.0)
    exponent = math.floor(log10)
    mantissa = round(10.0 ** (log10 - exponent), digits - 1)
    if mantissa >= 10.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.{digits - 1}f}e{exponent:+03d}"

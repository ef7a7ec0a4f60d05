"""Collaborative verification by several privacy enthusiasts.

``c`` users pool their estimated rates: the means of their ``p`` and ``q``
estimates feed one test over ``c * n`` accumulated queries, and H0 is
rejected when the resulting Type II error falls below an agreed bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kernels
from .core import (
    Decision,
    OutcomeVector,
    Strategy,
    TestPlan,
    check_probability,
    deletion_confidence,
)
from .errors import DomainError, UsageError
from .estimation import RateEstimate

# trials per independently seeded block; fixed so results do not depend on
# how blocks are scheduled
MC_BLOCK = 4096


@dataclass(frozen=True)
class UserReport:
    user_id: str
    p_hat: RateEstimate
    q_hat: RateEstimate
    outcomes: OutcomeVector


@dataclass(frozen=True)
class Population:
    """True ``(p, q)`` pairs of the enthusiasts that may collaborate."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((check_probability(p, "p_true"), check_probability(q, "q_true"))
                        for p, q in self.entries)
        if not entries:
            raise UsageError("population is empty")
        object.__setattr__(self, "entries", entries)

    @property
    def p_true(self):
        return np.array([p for p, _ in self.entries])

    @property
    def q_true(self):
        return np.array([q for _, q in self.entries])

    @classmethod
    def from_csv(cls, path):
        """Read a CSV with header ``p_true,q_true``."""
        with open(Path(path), newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"p_true", "q_true"} <= set(reader.fieldnames):
                raise UsageError(f"{path}: header must contain p_true,q_true")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((check_probability(row["p_true"], "p_true"),
                                 check_probability(row["q_true"], "q_true")))
                except DomainError as exc:
                    raise DomainError(f"{path}:{lineno}: {exc}") from None
        return cls(tuple(rows))

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p_true", "q_true"])
            writer.writerows(self.entries)


@dataclass(frozen=True)
class PooledDecision:
    decision: Decision
    result: object
    n_total: int
    p_bar: Fraction
    q_bar: Fraction
    # auxiliary: pooled success count against the pooled threshold
    count_decision: Decision

    def to_dict(self):
        return {
            "decision": self.decision.value,
            "count_decision": self.count_decision.value,
            "n_total": self.n_total,
            "p_bar": float(self.p_bar),
            "q_bar": float(self.q_bar),
            "result": self.result.to_dict(),
        }


def pooled_test(reports, alpha, beta_bound):
    if not reports:
        raise UsageError("pooled_test needs at least one report")
    ns = {len(r.outcomes) for r in reports}
    if len(ns) != 1:
        raise UsageError(f"reports use different query counts: {sorted(ns)}")
    beta_bound = check_probability(beta_bound, "beta_bound")
    n = ns.pop()
    c = len(reports)
    p_bar = sum((r.p_hat.r_hat for r in reports), Fraction(0)) / c
    q_bar = sum((r.q_hat.r_hat for r in reports), Fraction(0)) / c
    plan = TestPlan(n * c, alpha)
    result = deletion_confidence(plan, Strategy(q=float(q_bar), p=float(p_bar)))
    reject = beta_bound > 0 and result.log_beta < math.log(beta_bound)
    decision = Decision.REJECT_H0 if reject else Decision.ACCEPT_H0
    pooled_count = sum(r.outcomes.count for r in reports)
    count_decision = (Decision.ACCEPT_H0 if pooled_count <= result.threshold_k
                      else Decision.REJECT_H0)
    return PooledDecision(decision, result, plan.n, p_bar, q_bar, count_decision)


@dataclass(frozen=True)
class FalseNegativeEstimate:
    probability: float
    stderr: float
    trials: int
    accepts: int

    def to_dict(self):
        return {"probability": self.probability, "stderr": self.stderr,
                "trials": self.trials, "accepts": self.accepts}


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def false_negative_probability(pop, c, n, alpha, beta_bound, trials, seed,
                               replace=True):
    """Monte Carlo rate at which a non-deleting server passes the pooled test.

    Each trial samples ``c`` users from ``pop``, draws ``n`` verification
    queries at their retained rate ``p_true`` and ``n`` alternate-pattern
    queries at ``q_true``, and applies :func:`pooled_test`. Returns the
    fraction of trials accepting H0 with its binomial standard error.
    """
    if c < 1 or trials < 1 or n < 1:
        raise DomainError("c, n and trials must be >= 1")
    if not replace and c > len(pop.entries):
        raise UsageError("cannot sample more users than the population holds without replacement")
    plan = TestPlan(c * n, alpha)
    beta_bound = check_probability(beta_bound, "beta_bound")
    log_bound = math.log(beta_bound) if beta_bound > 0 else -math.inf
    p_true, q_true = pop.p_true, pop.q_true
    n_total = c * n

    # the pooled rule depends only on the pooled counts, so cache per count pair
    q_thresholds = {}
    verdicts = {}

    def accepts_h0(q_count, p_count):
        key = (q_count, p_count)
        hit = verdicts.get(key)
        if hit is None:
            k = q_thresholds.get(q_count)
            if k is None:
                k = kernels.threshold(n_total, plan.log_alpha, q_count / n_total)
                q_thresholds[q_count] = k
            log_beta = kernels.log_cdf(k, n_total, p_count / n_total)
            hit = not (log_beta < log_bound)
            verdicts[key] = hit
        return hit

    accepts = 0
    done = 0
    block = 0
    while done < trials:
        size = min(MC_BLOCK, trials - done)
        rng = _block_rng(seed, block)
        if replace:
            idx = rng.integers(0, len(pop.entries), size=(size, c))
        else:
            idx = np.argsort(rng.random((size, len(pop.entries))), axis=1)[:, :c]
        # Bernoulli bits per query, summed per user
        p_counts = (rng.random((size, c, n)) < p_true[idx][:, :, None]).sum(axis=(1, 2))
        q_counts = (rng.random((size, c, n)) < q_true[idx][:, :, None]).sum(axis=(1, 2))
        for qc, pc in zip(q_counts.tolist(), p_counts.tolist()):
            accepts += accepts_h0(qc, pc)
        done += size
        block += 1
    prob = accepts / trials
    stderr = math.sqrt(prob * (1.0 - prob) / trials)
    return FalseNegativeEstimate(prob, stderr, trials, accepts)

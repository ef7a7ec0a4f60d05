"""Probabilistic verification of machine unlearning with backdoor triggers."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    PRNG_ALGORITHM,
    Decision,
    OutcomeVector,
    Strategy,
    TestPlan,
    TestResult,
    beta_error,
    decide,
    deletion_confidence,
    draw_outcomes,
    samples_needed,
    threshold_for_alpha,
)
from .errors import (  # noqa: E402
    ConfigError,
    DegenerateStrategyError,
    DomainError,
    UnlearnVerifyError,
    UsageError,
)
from .kernels import backend  # noqa: E402

__all__ = [
    "PRNG_ALGORITHM", "Decision", "OutcomeVector", "Strategy", "TestPlan", "TestResult",
    "beta_error", "decide", "deletion_confidence", "draw_outcomes", "samples_needed",
    "threshold_for_alpha", "ConfigError", "DegenerateStrategyError", "DomainError",
    "UnlearnVerifyError", "UsageError", "backend",
]

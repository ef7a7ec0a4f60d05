"""Exception types shared across the package."""


class UnlearnVerifyError(Exception):
    """Base class for all package errors."""


class DomainError(UnlearnVerifyError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(UnlearnVerifyError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class DegenerateStrategyError(UnlearnVerifyError, ValueError):
    """The strategy has p <= q, so no test can separate the hypotheses."""


class ConfigError(UnlearnVerifyError, ValueError):
    """A simulation configuration violates its invariants."""

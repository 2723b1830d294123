"""
Errors

Exception hierarchy shared by every module. Configuration problems and
numeric failures are kept on separate branches so the CLI can map them to
distinct exit codes.
"""

from typing import Optional


class GpCertError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# Configuration / input
# ---------------------------------------------------------------------------

class ConfigError(GpCertError, ValueError):
    """Invalid CLI argument, config file value, or environment setting."""


class DatasetError(ConfigError):
    """A dataset violates its structural invariants."""


class ParseError(DatasetError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{':'.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


# ---------------------------------------------------------------------------
# Numeric failures
# ---------------------------------------------------------------------------

class NumericError(GpCertError, ArithmeticError):
    """A computation could not produce a trustworthy number."""


class DimensionError(NumericError, ValueError):
    """Points of different dimension were combined."""


class DomainError(NumericError, ValueError):
    """An argument lies outside the domain of an operation."""


class SingularGramError(NumericError):
    """The gram matrix (plus jitter) is not positive definite."""

    def __init__(self, pivot: int, message: Optional[str] = None):
        self.pivot = pivot
        super().__init__(message or f"gram matrix is not positive definite at pivot {pivot}")


class DegeneratePairError(NumericError, ValueError):
    """Two points that must be distinct coincide (numerically)."""


class NonPositiveSigmaError(NumericError):
    """The two-point variance evaluated to a clearly negative value."""

    def __init__(self, sigma2: float):
        self.sigma2 = sigma2
        super().__init__(f"two-point variance is non-positive: {sigma2!r}")

"""Exception hierarchy.

``InputError`` subclasses describe malformed input (CLI exit code 2);
``EstimationError`` subclasses describe data that cannot support a formula
(CLI exit code 3).
"""
from __future__ import annotations


class CrtInferError(Exception):
    """Base class for all package errors."""


class InputError(CrtInferError, ValueError):
    """Malformed or inconsistent input."""


class DomainError(InputError):
    """Argument outside the mathematical domain of a function."""


class BadSubsampleSize(InputError):
    pass


class UnknownStratum(InputError):
    pass


class ConfigError(InputError):
    pass


class SchemaError(InputError):
    pass


class TooLarge(CrtInferError):
    """Enumeration would exceed its size guard."""


class EstimationError(CrtInferError):
    """The sample cannot support the requested estimator."""


class EmptyArm(EstimationError):
    pass


class ZeroSizeArm(EstimationError):
    pass


class EmptyCell(EstimationError):
    """A stratum has no clusters (or too few) in one arm."""

    def __init__(self, stratum, arm, message: str | None = None):
        self.stratum = stratum
        self.arm = arm
        super().__init__(message or f"stratum {stratum!r} has no clusters with arm={arm}")


class RankDeficient(EstimationError):
    def __init__(self, stratum=None, arm=None, message: str | None = None):
        self.stratum = stratum
        self.arm = arm
        where = "" if stratum is None else f" in stratum {stratum!r}, arm {arm}"
        super().__init__(message or f"regression design is rank deficient{where}")


class DegenerateVariance(EstimationError):
    def __init__(self, value: float, message: str | None = None):
        self.value = value
        super().__init__(message or f"variance estimate is negative ({value:.6g})")


class ReplicationError(CrtInferError):
    """Wraps an estimation failure inside a Monte Carlo replication."""

    def __init__(self, replication: int, cause: Exception):
        self.replication = replication
        self.cause = cause
        super().__init__(f"replication {replication}: {type(cause).__name__}: {cause}")

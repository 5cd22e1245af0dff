"""Exception types shared across the package."""


class PinnedGPError(Exception):
    """Base class for all package errors."""


class ParameterError(PinnedGPError, ValueError):
    """A kernel or run parameter violates its constraints."""


class DomainError(PinnedGPError, ValueError):
    """An argument lies outside the domain of a function (e.g. negative time)."""


class UnsupportedFamilyError(PinnedGPError, ValueError):
    """The operation is not defined for the requested process family."""


class DegenerateConditioningError(PinnedGPError, ArithmeticError):
    """A conditioning pivot (conditional variance) vanished."""


class FactorizationError(PinnedGPError, ArithmeticError):
    """Cholesky factorization failed even after the jitter ladder."""


class OutOfSpaceError(PinnedGPError, ValueError):
    """A path has a component outside the range of the covariance (infinite rate)."""


class InvalidStartError(PinnedGPError, ValueError):
    """The start of a step is not strictly inside the barrier(s)."""


class ConfigError(PinnedGPError, ValueError):
    """A run configuration is malformed or inconsistent."""

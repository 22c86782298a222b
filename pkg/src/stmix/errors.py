"""Exception types shared across the package.

Every error raised by library code derives from StmixError so callers can
catch one base class. The CLI maps user-input failures to exit code 1 and
numerical failures to exit code 2.
"""


class StmixError(Exception):
    """Base class for all package errors."""


class DomainError(StmixError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class LayoutError(StmixError, ValueError):
    """Sites, times, or array shapes are inconsistent or degenerate."""


class DataError(StmixError, ValueError):
    """Ingested data violate the file contract (duplicates, unknown ids, ...)."""


class ConfigError(StmixError, ValueError):
    """A run configuration is missing fields or violates documented minimums."""


class NumericalError(StmixError, RuntimeError):
    """A numerical routine failed (Cholesky, optimizer non-convergence, ...)."""


class EstimationError(StmixError, RuntimeError):
    """An estimation step produced an unusable result."""


class PrecisionError(StmixError, RuntimeError):
    """The Monte Carlo budget is too small for the requested precision."""

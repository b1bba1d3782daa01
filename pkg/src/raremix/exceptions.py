"""Error taxonomy shared across the package."""


class RareMixError(Exception):
    """Base class for all errors raised by this package."""


class SymmetryError(RareMixError):
    """A matrix that must be symmetric is not, beyond tolerance."""


class SingularCovarianceError(RareMixError):
    """Cholesky factorization hit a nonpositive or nonfinite pivot.

    ``pivot`` is the 0-based index of the failing leading minor when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class EmptyComponentError(RareMixError):
    """A mixture component's total weight collapsed to numerical zero."""


class NumericalError(RareMixError):
    """Generic numerical failure (eigen non-convergence, bad finite difference).

    ``coordinate`` identifies the offending packed-parameter index when the
    failure happened inside a per-coordinate loop.
    """

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class DivergingIntegralError(RareMixError):
    """The squared-density ratio integral diverges.

    Raised when 2*inv(sigma1) - inv(sigma0) is not positive definite, the
    condition for the ratio-Gaussian mass to be finite.
    """


class InitializationError(RareMixError):
    """An initialization strategy cannot produce a valid starting point."""


class UndefinedMetricError(RareMixError):
    """A metric is undefined on this input (single-class AUC, no positives)."""


class EmptyCellError(RareMixError):
    """A simulation cell has no successful replications to aggregate."""


class CsvFormatError(RareMixError):
    """A CSV row cannot be parsed. ``line`` is the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SchemaError(RareMixError):
    """Input parsed but has the wrong columns, fields, or dimensions."""


class ConfigError(RareMixError):
    """A configuration value is invalid or inconsistent."""

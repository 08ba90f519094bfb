"""Exception types shared across the package."""


class PolyfitError(Exception):
    """Base class for all package-specific errors."""


class InvalidDeformationError(PolyfitError):
    """Deformation gradient is not admissible (det F <= 0, singular C)."""


class InvalidInvariantError(PolyfitError):
    """Invariant values outside their admissible range (e.g. I3 <= 0)."""


class DomainError(PolyfitError):
    """Scalar input outside the domain a convex term is defined on."""


class InvalidParameterError(PolyfitError):
    """Parameter outside its admissible range (e.g. alpha not in [0, 1])."""


class ConfigurationError(PolyfitError):
    """Inconsistent or invalid configuration of models, banks, or runs."""


class ProtocolMismatchError(PolyfitError):
    """Loading protocol incompatible with the model (e.g. fibers under UT)."""


class DataError(PolyfitError):
    """Problems with datasets: parsing, validation, or empty input."""


class ParseError(DataError):
    """Malformed dataset file; message carries the offending line number."""


class NumericalError(PolyfitError):
    """Non-finite intermediates, failed quadrature, or diverged training."""


class UndefinedMetricError(PolyfitError):
    """Metric undefined for the given series (e.g. zero-variance R^2)."""

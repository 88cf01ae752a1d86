"""Exception types shared across the package."""


class DcsitError(Exception):
    """Base class for all package errors."""


class NonFiniteError(DcsitError):
    """A computation produced or received NaN/Inf."""


class NotPSDError(DcsitError):
    """Matrix is not positive semidefinite within tolerance."""


class NotPDError(DcsitError):
    """Matrix is not positive definite (Cholesky pivot too small)."""


class DomainError(DcsitError):
    """Parameter outside its documented domain."""


class WeightError(DcsitError):
    """Probability weights do not normalize."""


class TooLargeError(DcsitError):
    """Requested enumeration exceeds the hard size cap."""


class ProjectionStallError(DcsitError):
    """Alternating projections stopped making progress while infeasible."""


class ConfigError(DcsitError):
    """Malformed or unknown run configuration."""

"""Exception hierarchy shared across the package."""


class RatexpError(Exception):
    """Base class for all package errors."""


class SchemaError(RatexpError):
    """A required column is missing from an input file."""


class ValidationError(RatexpError):
    """Input data violates a domain invariant."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ParseError(ValidationError):
    """A field could not be parsed as a number."""


class DegenerateSampleError(RatexpError):
    """The sample cannot support the requested computation (empty arm, zero variance...)."""


class ConditioningError(RatexpError):
    """Covariate covariance is numerically singular."""


class NumericalError(RatexpError):
    """An iterative numerical routine failed to converge."""

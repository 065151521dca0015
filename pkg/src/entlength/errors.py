"""Exception types shared across the package."""


class EntLengthError(Exception):
    """Base class for all package errors."""


class ValidationError(EntLengthError, ValueError):
    """An input violates a documented precondition."""


class CapacityError(EntLengthError):
    """A requested size exceeds a configured limit."""


class ScheduleError(ValidationError):
    """A gate acts on qubits that are not scheduled to interact."""


class FitError(EntLengthError):
    """A decay fit cannot be formed from the supplied points."""


class DegenerateFitError(FitError):
    """Every point is zero, so the decay is faster than the data can resolve."""


class InsufficientDataError(FitError):
    """Fewer usable points than a straight-line fit with a residual needs."""


class BracketError(EntLengthError):
    """Spanning curves of different sizes do not cross on the scanned grid."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class ShapeError(ValidationError):
    """A noise realization does not belong to the lattice it is used with."""


class ConfigurationError(ValidationError):
    """A run configuration is inconsistent or asks for an unavailable quantity."""

from typing import Optional


class GccError(Exception):
    """Base exception for guaranteed cost control errors."""
    pass


class DimensionError(GccError, ValueError):
    """Raised when matrix shapes are inconsistent."""
    pass


class NotPositiveSemidefiniteError(GccError):
    """Raised when a matrix expected to be PSD has a negative eigenvalue."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(GccError):
    """Raised when an iterative kernel exhausts its budget."""
    pass


class SingularMatrixError(GccError):
    """Raised when a matrix that must be inverted is (numerically) singular."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(message)
        self.condition = condition


class WellPosednessError(GccError):
    """Raised when ||D_z^w||_2 >= 1, so I - D_z^w Delta may be singular."""
    pass


class AssumptionError(GccError):
    """Raised when a synthesis method's precondition does not hold."""
    pass


class SynthesisInfeasibleError(GccError):
    """Raised when the synthesis SDP admits no controller."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class BackendUnavailableError(GccError):
    """Raised when a configured SDP backend cannot be imported."""
    pass


class ProblemFileError(GccError):
    """Raised for malformed problem files and option overrides."""

    def __init__(self, message: str, field: Optional[str] = None,
                 location: Optional[str] = None):
        where = " @ ".join(p for p in (field, location) if p)
        super().__init__(f"{where}: {message}" if where else message)
        self.field = field
        self.location = location

"""Exception hierarchy shared by all modules."""


class NodalOpeningsError(Exception):
    """Base class for every error raised by the package."""


class DomainError(NodalOpeningsError, ValueError):
    """A point or argument lies outside the admissible domain."""


class GeometryError(NodalOpeningsError):
    """Degenerate or self-intersecting geometry."""


class NumericalError(NodalOpeningsError, ArithmeticError):
    """A numerical procedure failed to converge."""


class ConvergenceError(NumericalError):
    """Eigensolver did not reach the residual target.

    Attributes
    ----------
    best_residual : float
        Smallest residual among the wanted pairs when iteration stopped.
    """

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class ResonanceError(NodalOpeningsError):
    """The aspect ratio is (near) resonant; carries a ``ResonanceReport``."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SelectionError(ResonanceError):
    """No candidate eigenpair has the target mode signature."""


class SignatureError(NodalOpeningsError):
    """Quadrant sign pattern inconsistent with the target mode."""


class TopologyError(NodalOpeningsError):
    """Unexpected number of nodal branches or boundary endpoints.

    Attributes
    ----------
    count : int
        The number actually found.
    """

    def __init__(self, message, count=-1):
        super().__init__(message)
        self.count = count


class FitError(NodalOpeningsError):
    """Quadric fit is not hyperbolic."""


class InsufficientDataError(FitError):
    """Too few nodal points to fit a quadric."""


class ConfigError(NodalOpeningsError, ValueError):
    """Invalid experiment configuration."""

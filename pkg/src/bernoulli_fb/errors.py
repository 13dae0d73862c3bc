"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A precondition on user-supplied data failed."""


class GridTooCoarseError(ValidationError):
    """The requested contact measure cannot be represented on this grid."""


class SolverError(RuntimeError):
    """Iterative linear solve did not converge.

    Carries the final relative residual and the iteration count so callers
    can report diagnostics instead of guessing.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateShapeFieldError(ValidationError):
    """The perturbation field has (numerically) zero net flux through the support."""

"""Exception types shared across the package."""


class DomainError(ValueError):
    """Inputs lie outside the region where a quantity is defined."""


class UnsupportedPriorError(DomainError):
    """The effect prior lacks the structure an operation needs (e.g. a density at 0)."""


class BracketError(DomainError):
    """A root finder was given an interval without a sign change."""


class NoSolutionError(DomainError):
    """A threshold equation has no solution for the requested level."""


class DegenerateFitError(DomainError):
    """A residual sum of squares is zero or negative where a log is required."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of panels before reaching its tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error!r})")
        self.estimate = estimate
        self.error = error

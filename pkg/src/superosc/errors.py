"""Exception and warning types raised across the package."""


class SuperoscError(Exception):
    """Base class for all failures reported by this package."""

    kind = "SuperoscError"


class ConstraintError(SuperoscError, ValueError):
    """A constraint set or physical configuration violates its invariants."""

    kind = "ConstraintError"


class PrecisionExhausted(SuperoscError):
    """Residual tolerance still unmet at the maximum allowed working precision."""

    kind = "PrecisionExhausted"

    def __init__(self, message: str, residual: float, digits: int):
        super().__init__(message)
        self.residual = residual
        self.digits = digits


class NotPositiveDefinite(SuperoscError):
    """A non-positive pivot appeared while factorizing a Gram matrix."""

    kind = "NotPositiveDefinite"

    def __init__(self, message: str, pivot_index: int, pivot):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot = pivot


class NoConvergence(SuperoscError):
    """An iterative solver ran out of iterations."""

    kind = "NoConvergence"


class DenominatorVanishing(SuperoscError):
    """The quadratic-constraint denominator reached zero inside the band."""

    kind = "DenominatorVanishing"

    def __init__(self, message: str, momentum: float):
        super().__init__(message)
        self.momentum = momentum


class ZeroInSlit(SuperoscError):
    """The incident wave has numerically zero norm on the slit."""

    kind = "ZeroInSlit"


class BoundaryJump(SuperoscError):
    """The emerging wave does not vanish at the slit edges."""

    kind = "BoundaryJump"


class DegenerateEigenvalue(UserWarning):
    """The two smallest Gram eigenvalues coincide to the detection tolerance."""

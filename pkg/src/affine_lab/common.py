"""Shared constants, case tags and exception types."""

from __future__ import annotations

import enum

# Default gate for structure-equation residuals on generated hypersurfaces.
RESIDUAL_TOL = 1e-6
# Default gate for identities that hold to roundoff (apolarity on quadrics,
# tau of the Blaschke normal, volume normalisation, ...).
EXACT_TOL = 1e-8
# Relative rank tolerance for the immersion check (smallest/largest singular
# value of the Jacobian).
RANK_TOL = 1e-8


class Case(enum.Enum):
    """Classification case of a rotationally symmetric hypersurface.

    CASE1: warped product over an epsilon-quadric (epsilon != 0), fiber
           curvature nonzero.
    CASE2: flat fiber, sigma != r; graph-like immersion scaled by gamma_1.
    CASE3: flat fiber, sigma == r; translated paraboloid stack.
    """

    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"

    @classmethod
    def parse(cls, value: "Case | str") -> "Case":
        if isinstance(value, Case):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        for c in cls:
            if c.value == key:
                return c
        raise ValueError(f"unknown case tag: {value!r}")


class AffineLabError(Exception):
    """Base class for all toolkit errors."""


class DomainError(AffineLabError):
    """Parameter point outside the declared domain of an immersion."""


class NonImmersionError(AffineLabError):
    """The differential is rank deficient at the sampled point."""


class NonConvexError(AffineLabError):
    """Second fundamental form is indefinite or degenerate at the point."""


class BlaschkeConditionError(AffineLabError):
    """Internal Blaschke postcondition (tau = 0 or volume match) violated."""


class TransversalError(AffineLabError):
    """Supplied transversal field is tangential (basis singular)."""


class QuadricDetectedError(AffineLabError):
    """Difference tensor vanishes: quadric detected, the pointwise symmetry
    group is the full orthogonal group and no canonical frame exists."""


class SymmetryHypothesisError(AffineLabError):
    """Eigenstructure does not match a single rotation axis."""


class ConvexityError(AffineLabError):
    """Curve-level convexity inequality fails on the declared domain."""

    def __init__(self, message, t=None, value=None):
        super().__init__(message)
        self.t = t
        self.value = value


class DegenerateCurveError(AffineLabError):
    """Curve jet violates the non-degeneracy needed by the case formulas."""


class InadmissibleSphereCaseError(AffineLabError):
    """Requested sphere kind/case pair has no admissible family."""


class GaugeError(AffineLabError):
    """Parametrisation gauge coefficient vanished during integration."""

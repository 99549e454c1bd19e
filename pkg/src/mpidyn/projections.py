"""Metric projections onto hyperplanes, stripes, and stripe intersections.

A stripe is the slab between two parallel hyperplanes,
``{x : |<u, x> - alpha| <= xi}``.  The solvers project the current iterate
onto the intersection of the stripe built from the current search direction
with the stripe remembered from the previous descent step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateDirectionsError",
    "Stripe",
    "project_hyperplane",
    "project_stripe",
    "project_two_hyperplanes",
    "project_stripe_intersection",
]

# Relative determinant threshold below which two directions are treated as
# parallel and the joint two-plane projection is refused.
_DEGENERATE_DET = 1e-12

_POCS_ROUNDS = 100


class DegenerateDirectionsError(ValueError):
    """Raised when two search directions are too close to parallel."""


@dataclass(frozen=True)
class Stripe:
    """Slab ``{x : |<direction, x> - offset| <= half_width}``."""

    direction: np.ndarray
    offset: float
    half_width: float

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64)
        if direction.ndim != 1 or not np.any(direction):
            raise ValueError("stripe direction must be a nonzero vector")
        if self.half_width < 0:
            raise ValueError("stripe half_width must be >= 0")
        object.__setattr__(self, "direction", direction)

    @classmethod
    def whole_space(cls, dim: int) -> "Stripe":
        """Sentinel stripe containing every point (infinite half-width)."""
        direction = np.zeros(dim)
        direction[0] = 1.0
        return cls(direction, 0.0, np.inf)

    def signed_offset(self, x: np.ndarray) -> float:
        return float(self.direction @ x - self.offset)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        """Membership test; ``tol`` bounds the allowed Euclidean overshoot."""
        if np.isinf(self.half_width):
            return True
        excess = abs(self.signed_offset(x)) - self.half_width
        if excess <= 0:
            return True
        norm_u = np.linalg.norm(self.direction)
        return excess / norm_u <= tol * (1.0 + np.linalg.norm(x))


def project_hyperplane(x: np.ndarray, direction: np.ndarray, offset: float) -> np.ndarray:
    """Orthogonal projection of ``x`` onto ``{z : <direction, z> = offset}``."""
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm_sq = float(direction @ direction)
    if norm_sq == 0.0:
        raise ValueError("cannot project onto a hyperplane with zero direction")
    return x - ((direction @ x - offset) / norm_sq) * direction


def project_stripe(x: np.ndarray, stripe: Stripe) -> np.ndarray:
    """Metric projection onto a stripe.

    Points already inside are returned unchanged; outside points are clamped
    onto the nearer bounding hyperplane.
    """
    x = np.asarray(x, dtype=np.float64)
    d = stripe.signed_offset(x)
    # Tolerant inside test so a freshly projected boundary point stays put.
    slack = 1e-12 * (1.0 + abs(stripe.offset) + min(stripe.half_width, 1e300) + abs(d))
    if abs(d) <= stripe.half_width + slack:
        return x
    if d > 0:
        return project_hyperplane(x, stripe.direction, stripe.offset + stripe.half_width)
    return project_hyperplane(x, stripe.direction, stripe.offset - stripe.half_width)


def project_two_hyperplanes(
    x: np.ndarray,
    direction1: np.ndarray,
    offset1: float,
    direction2: np.ndarray,
    offset2: float,
) -> np.ndarray:
    """Projection onto the intersection of two hyperplanes.

    Solves the 2x2 Gram system for the coefficients of the two directions.
    Raises :class:`DegenerateDirectionsError` when the directions are close
    to parallel; the caller is expected to fall back to cyclic projections.
    """
    x = np.asarray(x, dtype=np.float64)
    u1 = np.asarray(direction1, dtype=np.float64)
    u2 = np.asarray(direction2, dtype=np.float64)
    g11 = float(u1 @ u1)
    g22 = float(u2 @ u2)
    g12 = float(u1 @ u2)
    if g11 == 0.0 or g22 == 0.0:
        raise ValueError("cannot project onto a hyperplane with zero direction")
    det = g11 * g22 - g12 * g12
    if abs(det) <= _DEGENERATE_DET * g11 * g22:
        raise DegenerateDirectionsError("search directions are nearly parallel")
    r1 = offset1 - float(u1 @ x)
    r2 = offset2 - float(u2 @ x)
    s = (g22 * r1 - g12 * r2) / det
    t = (g11 * r2 - g12 * r1) / det
    return x + s * u1 + t * u2


def project_stripe_intersection(
    x: np.ndarray, current: Stripe, previous: Stripe
) -> np.ndarray:
    """Projection of ``x`` onto the intersection of two stripes.

    ``x`` is expected to violate ``current`` (the solver only projects when
    the discrepancy check fails).  Procedure: project onto the violated
    bounding hyperplane of ``current``; if the result lies in ``previous``
    it is optimal.  Otherwise jointly project onto the two relevant bounding
    hyperplanes, and if that is degenerate or leaves either stripe violated,
    fall back to cyclic stripe projections, which converge onto the
    intersection.
    """
    x = np.asarray(x, dtype=np.float64)
    d = current.signed_offset(x)
    if abs(d) <= current.half_width:
        if previous.contains(x):
            return x
    else:
        bound = current.offset + np.copysign(current.half_width, d)
        candidate = project_hyperplane(x, current.direction, bound)
        if previous.contains(candidate, tol=1e-10):
            return candidate
        d_prev = previous.signed_offset(candidate)
        prev_bound = previous.offset + np.copysign(previous.half_width, d_prev)
        try:
            joint = project_two_hyperplanes(
                x, current.direction, bound, previous.direction, prev_bound
            )
            if current.contains(joint, tol=1e-8) and previous.contains(joint, tol=1e-8):
                return joint
        except DegenerateDirectionsError:
            pass
    result = x
    for _ in range(_POCS_ROUNDS):
        result = project_stripe(result, current)
        result = project_stripe(result, previous)
    return result

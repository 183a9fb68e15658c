"""Vector-space primitives: metric operators, prox functions, Bregman distances.

Points live in a finite-dimensional real space and are represented as 1-D
float arrays.  Subgradients live in the dual space and use the same
representation; the pairing is the plain dot product.  Two geometries are
shipped:

* ``euclidean(B)`` -- prox function d(x) = (1/2) <Bx, x> for a symmetric
  positive-definite B, primal norm ||x||_B = <Bx,x>^(1/2), dual norm
  ||g||_B* = <g, B^{-1} g>^(1/2).
* ``entropy`` -- negative entropy d(x) = sum_i x_i ln x_i on the standard
  simplex, primal norm l1, dual norm l-infinity.

Both prox functions are 1-strongly convex w.r.t. their norm, and their
Bregman distances are convex in the first argument, which the unbounded-set
method requires.  Geometry objects are immutable after construction; all
operations are pure functions, safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import CapabilityError, DomainError

# Points and subgradients are plain 1-D float arrays.
Vector = np.ndarray
DualVector = np.ndarray

# Smallest coordinate kept by entropy prox maps; the prox gradient diverges at
# the simplex boundary, so iterates are floored into the relative interior.
ENTROPY_FLOOR = 1e-300


def as_vector(x, dim: int | None = None) -> Vector:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        v = v.reshape(-1)
    if dim is not None and v.size != dim:
        raise DomainError(f"expected a vector of dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise DomainError("vector has non-finite entries")
    return v


class MetricOperator:
    """Symmetric positive-definite operator B defining the Euclidean metric.

    Stored either as a diagonal (1-D array of positive entries) or as a dense
    SPD matrix with its inverse precomputed, since closed-form prox maps need
    B^{-1}.
    """

    def __init__(self, diag: np.ndarray | None = None, dense: np.ndarray | None = None):
        if (diag is None) == (dense is None):
            raise ValueError("exactly one of diag/dense must be given")
        if diag is not None:
            d = np.asarray(diag, dtype=float)
            if d.ndim != 1 or np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise ValueError("diagonal metric must have positive finite entries")
            self.diag = d
            self.dense = None
            self._inv_diag = 1.0 / d
            self.dim = d.size
        else:
            m = np.asarray(dense, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("dense metric must be square")
            m = 0.5 * (m + m.T)  # symmetry exact by construction
            w, v = np.linalg.eigh(m)
            if np.any(w <= 0):
                raise ValueError("dense metric must be positive definite")
            self.diag = None
            self.dense = m
            self._eigvals = w
            self._eigvecs = v
            self._inverse = (v * (1.0 / w)) @ v.T
            self.dim = m.shape[0]

    @staticmethod
    def identity(dim: int) -> "MetricOperator":
        return MetricOperator(diag=np.ones(dim))

    @property
    def is_identity(self) -> bool:
        return self.diag is not None and np.all(self.diag == 1.0)

    def apply(self, x: Vector) -> DualVector:
        if self.diag is not None:
            return self.diag * x
        return self.dense @ x

    def inv_apply(self, g: DualVector) -> Vector:
        if self.diag is not None:
            return self._inv_diag * g
        return self._inverse @ g

    def quad(self, x: Vector) -> float:
        """<Bx, x>."""
        return float(x @ self.apply(x))

    def inv_quad(self, g: DualVector) -> float:
        """<g, B^{-1} g>."""
        return float(g @ self.inv_apply(g))


class ProxGeometry:
    """A (domain, prox function, norm) triple with strong convexity one."""

    EUCLIDEAN = "euclidean"
    ENTROPY = "entropy"

    def __init__(self, kind: str, dim: int, metric: MetricOperator | None = None):
        if kind not in (self.EUCLIDEAN, self.ENTROPY):
            raise ValueError(f"unknown geometry kind {kind!r}")
        if kind == self.EUCLIDEAN:
            if metric is None:
                metric = MetricOperator.identity(dim)
            if metric.dim != dim:
                raise ValueError("metric dimension mismatch")
        elif metric is not None:
            raise ValueError("entropy geometry takes no metric operator")
        self.kind = kind
        self.dim = dim
        self.metric = metric

    @staticmethod
    def euclidean(dim: int, metric: MetricOperator | None = None) -> "ProxGeometry":
        return ProxGeometry(ProxGeometry.EUCLIDEAN, dim, metric)

    @staticmethod
    def entropy(dim: int) -> "ProxGeometry":
        return ProxGeometry(ProxGeometry.ENTROPY, dim)

    @property
    def is_euclidean(self) -> bool:
        return self.kind == self.EUCLIDEAN

    # -- norms -------------------------------------------------------------

    def norm(self, x: Vector) -> float:
        if self.is_euclidean:
            return float(np.sqrt(max(self.metric.quad(x), 0.0)))
        return float(np.sum(np.abs(x)))

    def dual_norm(self, g: DualVector) -> float:
        if self.is_euclidean:
            return float(np.sqrt(max(self.metric.inv_quad(g), 0.0)))
        return float(np.max(np.abs(g))) if g.size else 0.0

    # -- prox function -----------------------------------------------------

    def prox_value(self, x: Vector) -> float:
        if self.is_euclidean:
            return 0.5 * self.metric.quad(x)
        self._check_entropy_domain(x)
        return float(np.sum(xlogy(x, x)))

    def prox_grad(self, x: Vector) -> DualVector:
        if self.is_euclidean:
            return self.metric.apply(x)
        self._check_entropy_domain(x)
        return 1.0 + np.log(x)

    def bregman(self, x: Vector, y: Vector) -> float:
        """d(y) - d(x) - <grad d(x), y - x>, always >= ||x-y||^2 / 2."""
        if self.is_euclidean:
            diff = y - x
            return 0.5 * self.metric.quad(diff)
        self._check_entropy_domain(x)
        if np.any(y < 0):
            raise DomainError("entropy geometry requires nonnegative second argument")
        # xlogy handles zero coordinates of y; the linear terms cancel on the
        # simplex but are kept so the formula is exact off it too.
        return float(np.sum(xlogy(y, y / np.where(y > 0, x, 1.0))) + np.sum(x - y))

    def _check_entropy_domain(self, x: Vector) -> None:
        if np.any(x <= 0):
            raise DomainError("entropy geometry is evaluated at a nonpositive coordinate")


@dataclass(frozen=True, eq=False)
class SetDescriptor:
    """Closed convex feasible set Q.

    Kinds: whole-space | box(l, u) | ball(center, radius, l2) |
    halfspaces(<a_j, x> <= b_j) | standard simplex.
    """

    kind: str
    dim: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None

    WHOLE = "whole-space"
    BOX = "box"
    BALL = "ball"
    HALFSPACES = "halfspaces"
    SIMPLEX = "simplex"

    @staticmethod
    def whole_space(dim: int) -> "SetDescriptor":
        return SetDescriptor(SetDescriptor.WHOLE, dim)

    @staticmethod
    def box(lower, upper) -> "SetDescriptor":
        lo = as_vector(lower)
        hi = as_vector(upper, lo.size)
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        return SetDescriptor(SetDescriptor.BOX, lo.size, lower=lo, upper=hi)

    @staticmethod
    def ball(center, radius: float) -> "SetDescriptor":
        c = as_vector(center)
        if not radius > 0:
            raise ValueError("ball requires radius > 0")
        return SetDescriptor(SetDescriptor.BALL, c.size, center=c, radius=float(radius))

    @staticmethod
    def halfspaces(normals, offsets) -> "SetDescriptor":
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = as_vector(offsets, a.shape[0])
        if not np.all(np.isfinite(a)):
            raise ValueError("halfspace normals must be finite")
        return SetDescriptor(SetDescriptor.HALFSPACES, a.shape[1], normals=a, offsets=b)

    @staticmethod
    def simplex(dim: int) -> "SetDescriptor":
        if dim < 2:
            raise ValueError("simplex requires dimension >= 2")
        return SetDescriptor(SetDescriptor.SIMPLEX, dim)

    def same_as(self, other: "SetDescriptor") -> bool:
        if self is other:
            return True
        if self.kind != other.kind or self.dim != other.dim:
            return False
        for a, b in (
            (self.lower, other.lower),
            (self.upper, other.upper),
            (self.center, other.center),
            (self.normals, other.normals),
            (self.offsets, other.offsets),
        ):
            if (a is None) != (b is None):
                return False
            if a is not None and (a.shape != b.shape or not np.array_equal(a, b)):
                return False
        return self.radius == other.radius

    def contains(self, x: Vector, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.size != self.dim:
            return False
        if self.kind == self.WHOLE:
            return True
        if self.kind == self.BOX:
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        if self.kind == self.BALL:
            return float(np.linalg.norm(x - self.center)) <= self.radius + tol
        if self.kind == self.HALFSPACES:
            return bool(np.all(self.normals @ x <= self.offsets + tol))
        if self.kind == self.SIMPLEX:
            return bool(np.all(x >= -tol) and abs(float(np.sum(x)) - 1.0) <= tol)
        raise ValueError(f"unknown set kind {self.kind!r}")

    def is_bounded(self) -> bool:
        return self.kind in (self.BOX, self.BALL, self.SIMPLEX)

    def support_min(self, a: DualVector) -> float:
        """min_{x in Q} <a, x>; -inf when the set is unbounded in direction -a."""
        a = np.asarray(a, dtype=float)
        if self.kind == self.WHOLE:
            return 0.0 if not np.any(a != 0) else -np.inf
        if self.kind == self.BOX:
            return float(np.sum(np.where(a >= 0, a * self.lower, a * self.upper)))
        if self.kind == self.BALL:
            return float(a @ self.center) - self.radius * float(np.linalg.norm(a))
        if self.kind == self.SIMPLEX:
            return float(np.min(a))
        raise CapabilityError(f"support function not available for set kind {self.kind!r}")

    def cover_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Smallest axis-aligned box containing the set (bounded kinds only)."""
        if self.kind == self.BOX:
            return self.lower.copy(), self.upper.copy()
        if self.kind == self.BALL:
            return self.center - self.radius, self.center + self.radius
        if self.kind == self.SIMPLEX:
            return np.zeros(self.dim), np.ones(self.dim)
        raise CapabilityError(f"no bounding box for set kind {self.kind!r}")


def validate_pair(geom: ProxGeometry, Q: SetDescriptor) -> None:
    """Reject (geometry, set) pairs without exact subproblem solvers."""
    if geom.dim != Q.dim:
        raise CapabilityError("geometry/set dimension mismatch")
    if geom.kind == ProxGeometry.ENTROPY:
        if Q.kind != SetDescriptor.SIMPLEX:
            raise CapabilityError("entropy geometry supports only the standard simplex")
    elif Q.kind == SetDescriptor.SIMPLEX:
        raise CapabilityError("simplex prox maps are supported only under the entropy geometry")


# -- module operations -----------------------------------------------------


def bregman_distance(geom: ProxGeometry, x: Vector, y: Vector) -> float:
    """Bregman distance generated by the geometry's prox function."""
    x = as_vector(x, geom.dim)
    y = as_vector(y, geom.dim)
    return geom.bregman(x, y)


def dual_norm(geom: ProxGeometry, g: DualVector) -> float:
    """Norm of a dual-space vector under the geometry's norm pairing."""
    g = as_vector(g, geom.dim)
    return geom.dual_norm(g)


def first_arg_convexity_check(
    geom: ProxGeometry,
    u1: Vector,
    u2: Vector,
    x: Vector,
    alpha: float,
    tol: float = 1e-12,
) -> bool:
    """Check convexity of the Bregman distance in its first argument.

    True iff  beta(alpha*u1 + (1-alpha)*u2, x) <=
    alpha*beta(u1, x) + (1-alpha)*beta(u2, x) + tol.  Both shipped geometries
    satisfy this for all inputs, which the unbounded-set method relies on.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    u1 = as_vector(u1, geom.dim)
    u2 = as_vector(u2, geom.dim)
    x = as_vector(x, geom.dim)
    mix = alpha * u1 + (1.0 - alpha) * u2
    lhs = geom.bregman(mix, x)
    rhs = alpha * geom.bregman(u1, x) + (1.0 - alpha) * geom.bregman(u2, x)
    return lhs <= rhs + tol

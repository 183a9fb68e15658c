"""Function oracles, composite terms, problem instances, and the gallery.

An oracle maps a point to ``(value, subgradient)``.  Convex oracles return a
true subgradient; quasi-convex oracles return a direction ``g`` with the
separation property  <g, y - x> >= 0  =>  f(y) >= f(x),  which is all the
basic method needs.  Optional metadata carries a uniform subgradient-norm
bound M (over the feasible set), a Holder-gradient pair (L, nu), and a
strong-convexity modulus.

Oracles are pure and immutable; instances can be evaluated concurrently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GalleryLookupError
from .geometry import ProxGeometry, SetDescriptor, Vector, as_vector


class SubgradOracle:
    """Base class: value/subgradient oracle with optional metadata."""

    def __init__(self, name="", lipschitz=None, holder=None, strong_convexity=None):
        self.name = name
        self.lipschitz = lipschitz  # bound on dual norm of subgradients over Q
        self.holder = holder  # (L_nu, nu) Holder-continuous gradient
        self.strong_convexity = strong_convexity

    def eval(self, x: Vector) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def value(self, x: Vector) -> float:
        return self.eval(x)[0]

    def subgrad(self, x: Vector) -> np.ndarray:
        return self.eval(x)[1]

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.eval(row)[0] for row in X])


class LinearOracle(SubgradOracle):
    """f(x) = <a, x> + b."""

    def __init__(self, a, b: float = 0.0, **meta):
        super().__init__(**meta)
        self.a = as_vector(a)
        self.b = float(b)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.a @ x) + self.b, self.a.copy()

    def value_batch(self, X):
        return X @ self.a + self.b


class QuadraticOracle(SubgradOracle):
    """f(x) = (1/2) (x - z)^T P (x - z) + c with P symmetric PSD."""

    def __init__(self, P, center=None, offset: float = 0.0, **meta):
        super().__init__(**meta)
        P = np.asarray(P, dtype=float)
        if P.ndim == 1:
            P = np.diag(P)
        self.P = 0.5 * (P + P.T)
        self.center = np.zeros(P.shape[0]) if center is None else as_vector(center, P.shape[0])
        self.offset = float(offset)

    def eval(self, x):
        d = np.asarray(x, dtype=float) - self.center
        Pd = self.P @ d
        return 0.5 * float(d @ Pd) + self.offset, Pd

    def value_batch(self, X):
        D = X - self.center
        return 0.5 * np.einsum("ij,ij->i", D @ self.P, D) + self.offset


class NormDistOracle(SubgradOracle):
    """f(x) = ||x - z||_2 + c; at x = z any unit vector is a subgradient."""

    def __init__(self, center, offset: float = 0.0, **meta):
        meta.setdefault("lipschitz", 1.0)
        super().__init__(**meta)
        self.center = as_vector(center)
        self.offset = float(offset)

    def eval(self, x):
        d = np.asarray(x, dtype=float) - self.center
        r = float(np.linalg.norm(d))
        if r == 0.0:
            g = np.zeros_like(d)
            g[0] = 1.0
        else:
            g = d / r
        return r + self.offset, g

    def value_batch(self, X):
        return np.linalg.norm(X - self.center, axis=1) + self.offset


class RatioOracle(SubgradOracle):
    """Quasi-convex ratio f(x) = (<a,x> + b) / (<c,x> + e) on {<c,x> + e > 0}.

    The reported direction g = a - f(x) c separates the sublevel set exactly:
    <g, y - x> >= 0 implies f(y) >= f(x) whenever the denominator stays
    positive.
    """

    def __init__(self, a, b: float, c, e: float, **meta):
        super().__init__(**meta)
        self.a = as_vector(a)
        self.b = float(b)
        self.c = as_vector(c, self.a.size)
        self.e = float(e)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        den = float(self.c @ x) + self.e
        if den <= 0:
            raise DomainError("ratio oracle evaluated where the denominator is nonpositive")
        v = (float(self.a @ x) + self.b) / den
        return v, self.a - v * self.c


class MaxTypeFunction:
    """f(x) = max_i f_i(x) over convex components.

    The reported subgradient comes from the lowest active component (tie
    tolerance 1e-12) to keep traces deterministic.
    """

    TIE_TOL = 1e-12

    def __init__(self, components, name=""):
        if not components:
            raise ValueError("max-type function needs at least one component")
        self.components = list(components)
        self.name = name

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def lipschitz(self):
        bounds = [c.lipschitz for c in self.components]
        return None if any(b is None for b in bounds) else max(bounds)

    @property
    def holder(self):
        hs = {c.holder for c in self.components}
        return hs.pop() if len(hs) == 1 else None

    @property
    def strong_convexity(self):
        mods = [c.strong_convexity for c in self.components]
        return None if any(m is None for m in mods) else min(mods)

    def eval_components(self, x):
        return [c.eval(x) for c in self.components]

    def eval(self, x):
        evals = self.eval_components(x)
        values = np.array([v for v, _ in evals])
        vmax = float(np.max(values))
        idx = int(np.argmax(values >= vmax - self.TIE_TOL))
        return vmax, evals[idx][1]

    def value(self, x):
        return max(c.value(x) for c in self.components)

    def subgrad(self, x):
        return self.eval(x)[1]

    def value_batch(self, X):
        return np.max(np.stack([c.value_batch(X) for c in self.components]), axis=0)


def as_max_type(f) -> MaxTypeFunction:
    return f if isinstance(f, MaxTypeFunction) else MaxTypeFunction([f], name=getattr(f, "name", ""))


def linearization(f, xbar: Vector, x: Vector) -> float:
    """max_i [ f_i(xbar) + <f_i'(xbar), x - xbar> ], a lower model of f at x."""
    f = as_max_type(f)
    xbar = np.asarray(xbar, dtype=float)
    x = np.asarray(x, dtype=float)
    return max(v + float(g @ (x - xbar)) for v, g in f.eval_components(xbar))


@dataclass(frozen=True, eq=False)
class CompositeTerm:
    """Simple closed convex additive term: zero, set indicator, or linear."""

    kind: str
    set: SetDescriptor | None = None
    coef: np.ndarray | None = None

    ZERO = "zero"
    INDICATOR = "indicator"
    LINEAR = "linear"

    @staticmethod
    def zero() -> "CompositeTerm":
        return CompositeTerm(CompositeTerm.ZERO)

    @staticmethod
    def indicator(S: SetDescriptor) -> "CompositeTerm":
        return CompositeTerm(CompositeTerm.INDICATOR, set=S)

    @staticmethod
    def linear(coef) -> "CompositeTerm":
        return CompositeTerm(CompositeTerm.LINEAR, coef=as_vector(coef))

    def value(self, x: Vector, tol: float = 1e-9) -> float:
        if self.kind == self.ZERO:
            return 0.0
        if self.kind == self.INDICATOR:
            return 0.0 if self.set.contains(x, tol) else np.inf
        return float(self.coef @ np.asarray(x, dtype=float))

    def linear_part(self, dim: int) -> np.ndarray:
        if self.kind == self.LINEAR:
            return self.coef
        return np.zeros(dim)

    def indicator_set(self) -> SetDescriptor | None:
        return self.set if self.kind == self.INDICATOR else None


@dataclass
class Truth:
    """Optional analytic ground truth attached to a problem instance."""

    xstar: np.ndarray | None = None
    f0star: float | None = None
    Fstar: float | None = None
    M0: float | None = None
    M: np.ndarray | None = None
    D: float | None = None
    D0: float | None = None
    mu: object | None = None  # callable r -> mu(r), an upper growth bound
    lambda_star: np.ndarray | None = None
    slater: np.ndarray | None = None


@dataclass
class ProblemInstance:
    """A fully specified problem: oracles, composite term, feasible set.

    ``psi`` attaches to the objective for composite problems and to the
    max of ``constraints`` for semi-composite ones; which reading applies is
    decided by the method driving the instance.
    """

    name: str
    geom: ProxGeometry
    Q: SetDescriptor
    objective: object  # SubgradOracle | MaxTypeFunction
    psi: CompositeTerm = field(default_factory=CompositeTerm.zero)
    constraints: list = field(default_factory=list)
    x0: np.ndarray | None = None
    truth: Truth | None = None

    def __post_init__(self):
        if self.x0 is not None:
            self.x0 = as_vector(self.x0, self.geom.dim)
            if not self.Q.contains(self.x0):
                raise DomainError(f"x0 of problem {self.name!r} lies outside Q")

    @property
    def dim(self) -> int:
        return self.geom.dim

    @property
    def m(self) -> int:
        return len(self.constraints)

    def objective_max(self) -> MaxTypeFunction:
        return as_max_type(self.objective)

    def constraint_max(self) -> MaxTypeFunction:
        return MaxTypeFunction(self.constraints)

    def F(self, x: Vector) -> float:
        """Composite objective value f(x) + psi(x)."""
        return self.objective_max().value(x) + self.psi.value(x)

    def constraint_value(self, x: Vector) -> float:
        """Semi-composite constraint value max_i f_i(x) + psi(x)."""
        return self.constraint_max().value(x) + self.psi.value(x)

    def constraint_values(self, x: Vector) -> np.ndarray:
        return np.array([c.value(x) for c in self.constraints])


# -- gallery ----------------------------------------------------------------

# Declared D bounds use the exact supremum of the Bregman distance over the
# set times a 1.1 safety factor: the bound must hold strictly.
_D_SAFETY = 1.1


def _box_D(geom: ProxGeometry, lower, upper) -> float:
    span = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    return _D_SAFETY * 0.5 * float(span @ geom.metric.apply(span))


class _OptStepObjective(SubgradOracle):
    """x1^2/2 + (x2-1)^2/2, shifted so the constrained optimum is zero.

    Grouped as x1^2/2 + x2(x2-2)/2 so the value stays exactly representable
    on the optimal face x2 = 0, where the unshifted form would absorb the
    x1^2/2 term; the known-optimum rule needs that difference at full
    precision to keep halving.
    """

    def __init__(self):
        super().__init__(name="optstep", holder=(1.0, 1.0), strong_convexity=1.0)

    def eval(self, x):
        v = 0.5 * x[0] * x[0] + 0.5 * x[1] * (x[1] - 2.0)
        return float(v), np.array([x[0], x[1] - 1.0])

    def value_batch(self, X):
        return 0.5 * X[:, 0] ** 2 + 0.5 * X[:, 1] * (X[:, 1] - 2.0)


def _optstep_halfspace(seed=0):
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.halfspaces([[0.0, 1.0]], [0.0])
    f = MaxTypeFunction([_OptStepObjective()])
    truth = Truth(
        xstar=np.array([0.0, 0.0]),
        f0star=0.0,
        Fstar=0.0,
        mu=lambda r: r + 0.5 * r * r,  # ||grad f(x*)|| = 1
    )
    return ProblemInstance(
        name="optstep-halfspace",
        geom=geom,
        Q=Q,
        objective=f,
        psi=CompositeTerm.indicator(Q),
        x0=np.array([1.0, 0.0]),
        truth=truth,
    )


def _noslater_ball(seed=0):
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.ball([0.0, 0.0], 1.0)
    objective = LinearOracle([0.0, 1.0], lipschitz=1.0)
    constraint = LinearOracle([-1.0, 0.0], 1.0, lipschitz=1.0)  # 1 - x1 <= 0
    truth = Truth(
        xstar=np.array([1.0, 0.0]),
        f0star=0.0,
        M0=1.0,
        M=np.array([1.0]),
        D=_D_SAFETY * 2.0,
        mu=lambda r: r,
    )
    return ProblemInstance(
        name="noslater-ball",
        geom=geom,
        Q=Q,
        objective=objective,
        constraints=[constraint],
        x0=np.array([0.0, 0.0]),
        truth=truth,
    )


def _sc_quadratic(seed=0, n=8, mu=1.0, lf=10.0):
    n = int(n)
    if not (2 <= n <= 50 and 0 < mu <= lf):
        raise GalleryLookupError("sc-quadratic requires 2 <= n <= 50 and 0 < mu <= L")
    rng = np.random.default_rng(int(seed))
    Qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.linspace(mu, lf, n)
    A = (Qmat * eigs) @ Qmat.T
    z = rng.uniform(-1.0, 1.0, n)
    x0 = z + rng.uniform(-2.0, 2.0, n)
    geom = ProxGeometry.euclidean(n)
    f = MaxTypeFunction([QuadraticOracle(A, center=z, holder=(lf, 1.0), strong_convexity=mu)])
    truth = Truth(xstar=z.copy(), f0star=0.0, Fstar=0.0, mu=lambda r: 0.5 * lf * r * r)
    return ProblemInstance(
        name=f"sc-quadratic(n={n})",
        geom=geom,
        Q=SetDescriptor.whole_space(n),
        objective=f,
        x0=x0,
        truth=truth,
    )


def _norm_box(seed=0, n=10):
    n = int(n)
    rng = np.random.default_rng(int(seed))
    lower, upper = -np.ones(n), np.ones(n)
    z = rng.uniform(-0.6, 0.6, n)
    x0 = rng.uniform(-1.0, 1.0, n)
    geom = ProxGeometry.euclidean(n)
    truth = Truth(
        xstar=z.copy(),
        f0star=0.0,
        M0=1.0,
        D=_box_D(geom, lower, upper),
        mu=lambda r: r,
    )
    return ProblemInstance(
        name=f"norm-box(n={n})",
        geom=geom,
        Q=SetDescriptor.box(lower, upper),
        objective=NormDistOracle(z),
        x0=x0,
        truth=truth,
    )


def _quasi_ratio_box(seed=0):
    # f(x) = (x1 + x2 + 1) / (x1 + 3) on [0,1]^2: quasi-convex, minimized at 0.
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.box([0.0, 0.0], [1.0, 1.0])
    f = RatioOracle([1.0, 1.0], 1.0, [1.0, 0.0], 3.0, lipschitz=1.3)
    truth = Truth(xstar=np.array([0.0, 0.0]), f0star=1.0 / 3.0, M0=1.3, D=_box_D(geom, [0, 0], [1, 1]))
    return ProblemInstance(
        name="quasi-ratio-box",
        geom=geom,
        Q=Q,
        objective=f,
        x0=np.array([1.0, 1.0]),
        truth=truth,
    )


def _unit_ball_constraint():
    # f(x) = ||x||^2/2 - 1/2: smooth (L=1), feasible region is the unit ball.
    return QuadraticOracle(np.eye(2), offset=-0.5, holder=(1.0, 1.0), lipschitz=2.0 * np.sqrt(2.0))


def _semi_smooth_box(seed=0):
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.box([-2.0, -2.0], [2.0, 2.0])
    c0 = np.array([1.0, 0.3])
    nc = float(np.linalg.norm(c0))
    truth = Truth(
        xstar=-c0 / nc,
        f0star=-nc,
        Fstar=0.0,
        M0=nc,
        M=np.array([2.0 * np.sqrt(2.0)]),
        D=_box_D(geom, [-2, -2], [2, 2]),
        mu=lambda r: nc * r,
    )
    return ProblemInstance(
        name="semi-smooth-box",
        geom=geom,
        Q=Q,
        objective=LinearOracle(c0, lipschitz=nc),
        psi=CompositeTerm.indicator(Q),
        constraints=[_unit_ball_constraint()],
        x0=np.array([2.0, 1.5]),
        truth=truth,
    )


def _linquad_box(seed=0):
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.box([-2.0, -2.0], [2.0, 2.0])
    c = np.array([0.6, -0.8])
    truth = Truth(
        xstar=-c,  # ||c|| = 1
        f0star=-1.0,
        M0=1.0,
        M=np.array([2.0 * np.sqrt(2.0)]),
        D=_box_D(geom, [-2, -2], [2, 2]),
        lambda_star=np.array([1.0]),
        slater=np.array([0.0, 0.0]),
        mu=lambda r: r,
    )
    return ProblemInstance(
        name="linquad-box",
        geom=geom,
        Q=Q,
        objective=LinearOracle(c, lipschitz=1.0),
        constraints=[_unit_ball_constraint()],
        x0=np.array([1.8, -1.6]),
        truth=truth,
    )


def _twolin_box(seed=0):
    geom = ProxGeometry.euclidean(2)
    Q = SetDescriptor.box([-2.0, -2.0], [2.0, 2.0])
    f1 = LinearOracle([1.0, 1.0], -1.0, lipschitz=np.sqrt(2.0))
    f2 = LinearOracle([-1.0, 1.0], -0.5, lipschitz=np.sqrt(2.0))
    truth = Truth(
        xstar=np.array([0.25, 0.75]),
        f0star=-1.5,
        M0=2.0,
        M=np.array([np.sqrt(2.0), np.sqrt(2.0)]),
        D=_box_D(geom, [-2, -2], [2, 2]),
        lambda_star=np.array([1.0, 1.0]),
        slater=np.array([0.0, 0.0]),
        mu=lambda r: 2.0 * r,
    )
    return ProblemInstance(
        name="twolin-box",
        geom=geom,
        Q=Q,
        objective=LinearOracle([0.0, -2.0], lipschitz=2.0),
        constraints=[f1, f2],
        x0=np.array([-1.5, 2.0]),
        truth=truth,
    )


def _slater_unbounded(seed=0):
    geom = ProxGeometry.euclidean(2)
    x0 = np.array([1.5, 0.5])
    xstar = np.array([0.0, -1.0])
    truth = Truth(
        xstar=xstar,
        f0star=-1.0,
        M0=1.0,
        M=np.array([1.0]),
        D=2.5,  # beta(x0, x*) = 2.25
        D0=1.0,
        lambda_star=np.array([1.0]),
        slater=np.array([0.0, 0.0]),
        mu=lambda r: r,
    )
    return ProblemInstance(
        name="slater-unbounded",
        geom=geom,
        Q=SetDescriptor.whole_space(2),
        objective=LinearOracle([0.0, 1.0], lipschitz=1.0),
        constraints=[NormDistOracle([0.0, 0.0], offset=-1.0)],  # ||x|| - 1 <= 0
        x0=x0,
        truth=truth,
    )


_GALLERY = {
    "optstep-halfspace": (_optstep_halfspace, "composite quadratic over a halfspace; known-optimum steps halve x1"),
    "noslater-ball": (_noslater_ball, "min x2 s.t. 1 - x1 <= 0 on the unit ball; dual supremum 0 is unattained"),
    "sc-quadratic": (_sc_quadratic, "random strongly convex quadratic, params (n, mu, L); known minimizer"),
    "norm-box": (_norm_box, "f(x) = ||x - x*||_2 over a box, params (n,); mu(r) = r"),
    "quasi-ratio-box": (_quasi_ratio_box, "quasi-convex ratio of linear functions on the unit box"),
    "semi-smooth-box": (_semi_smooth_box, "linear objective with smooth semi-composite constraint on a box"),
    "linquad-box": (_linquad_box, "linear objective, one smooth quadratic constraint, Slater point at 0"),
    "twolin-box": (_twolin_box, "linear objective, two linear constraints active at the optimum"),
    "slater-unbounded": (_slater_unbounded, "linear objective, norm constraint, unbounded feasible set"),
}

_NAME_WITH_ARGS = re.compile(r"^([A-Za-z0-9-]+)\(([^)]*)\)$")


def list_gallery() -> dict[str, str]:
    return {name: desc for name, (_, desc) in _GALLERY.items()}


def gallery(name: str, seed: int = 0, **params) -> ProblemInstance:
    """Construct a named gallery instance.

    Parenthesized positional parameters are accepted in the name, e.g.
    ``sc-quadratic(8, 1.0, 10.0)``.
    """
    match = _NAME_WITH_ARGS.match(name.strip())
    if match:
        name = match.group(1)
        args = [float(tok) for tok in match.group(2).split(",") if tok.strip()]
    else:
        name = name.strip()
        args = []
    if name not in _GALLERY:
        raise GalleryLookupError(f"unknown gallery problem {name!r}; options: {sorted(_GALLERY)}")
    builder, _ = _GALLERY[name]
    return builder(seed, *args, **params)

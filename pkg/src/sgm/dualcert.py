"""Dual-side verification: brute-force dual values, gap certificates, Slater bounds.

The dual function is phi(lam) = min_{x in Q} [ f0(x) + <lam, f(x)> ]; the
restricted variant confines the inner minimization to the Bregman ball
Q_D = { x : beta(x0, x) <= D }, which is what makes duality statements
meaningful on unbounded sets.  Values are computed by independent oracles --
exact support functions when the Lagrangian is affine, otherwise a dense
masked grid (dimension <= 3) or a long projected-subgradient run -- never by
the switching solvers whose multiplier estimates they certify.

Every oracle reports its own accuracy: grid values overestimate the true
minimum by at most a Lipschitz-times-resolution term, exact values carry
tolerance zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, CertificateUnavailableError, DomainError
from .geometry import SetDescriptor, as_vector
from .oracles import LinearOracle, ProblemInstance, as_max_type

GRID_RESOLUTION = 400  # points per axis for the brute-force dual oracle


@dataclass(eq=False)
class MultiplierEstimate:
    """Aggregated step sums over an analysis window and their ratios.

    sigma[i] accumulates the dual step sizes of iterations driven by oracle i
    (0 is the objective); lambdas[i-1] = sigma[i] / sigma[0] approximates the
    optimal Lagrange multiplier of constraint i, defined only when sigma[0]
    is positive.
    """

    window: tuple[int, int]
    sigma: np.ndarray
    lambdas: np.ndarray | None
    counts: np.ndarray | None = None


@dataclass(eq=False)
class DualValue:
    value: float
    tolerance: float
    mode: str  # "exact" | "grid" | "subgradient"
    minimizer: np.ndarray | None = None

    @property
    def is_unbounded(self) -> bool:
        return math.isinf(self.value) and self.value < 0


@dataclass(eq=False)
class DualCertificate:
    lambdas: np.ndarray
    dual_value: float
    dual_tolerance: float
    dual_mode: str
    primal_best: float
    weighted_primal: float | None
    gap: float
    bound: float
    bound_holds: bool
    h_kN: float | None = None
    slater_bound_value: float | None = None
    slater_holds: bool | None = None
    empirical_M0: bool = False
    attained: bool = True
    warnings: list = field(default_factory=list)


def _lagrangian_as_affine(problem: ProblemInstance, lam):
    """Return (a, b) with L(x, lam) = <a, x> + b when every piece is affine."""
    parts = [problem.objective] + list(problem.constraints)
    weights = np.concatenate([[1.0], lam])
    a = np.zeros(problem.dim)
    b = 0.0
    for w, oracle in zip(weights, parts):
        if not isinstance(oracle, LinearOracle):
            return None
        a = a + w * oracle.a
        b += w * oracle.b
    return a, b


def _lagrangian_batch(problem, lam, X):
    total = problem.objective_max().value_batch(X)
    for li, ci in zip(lam, problem.constraints):
        if li != 0.0:
            total = total + li * ci.value_batch(X)
    return total


def _lipschitz_bound(problem, lam):
    t = problem.truth
    if t is not None and t.M0 is not None and t.M is not None:
        return float(t.M0 + np.dot(lam, t.M))
    return None


def _restriction_ball(problem, D):
    """Q_D = { x : beta(x0, x) <= D } as a euclidean ball, identity metric only."""
    geom = problem.geom
    if not (geom.is_euclidean and geom.metric.is_identity):
        raise CapabilityError("restricted dual values need the identity euclidean metric")
    return SetDescriptor.ball(problem.x0, math.sqrt(2.0 * D))


def _grid_axes(lower, upper, resolution):
    return [np.linspace(lower[i], upper[i], resolution) for i in range(lower.size)]


def _grid_min(problem, lam, sets, resolution):
    """Masked dense-grid minimum of the Lagrangian over the intersection of sets."""
    dim = problem.dim
    if dim > 3:
        raise CapabilityError("grid dual oracle supports dimension <= 3")
    lower, upper = None, None
    for S in sets:
        lo, hi = S.cover_box()
        lower = lo if lower is None else np.maximum(lower, lo)
        upper = hi if upper is None else np.minimum(upper, hi)
    if np.any(lower > upper):
        raise DomainError("restriction ball does not meet the feasible set")
    axes = _grid_axes(lower, upper, resolution)
    best_val, best_pt = np.inf, None
    # Chunk along the first axis to keep memory flat in dimension 3.
    tail = np.meshgrid(*axes[1:], indexing="ij") if dim > 1 else []
    tail_cols = [t.ravel() for t in tail]
    for x1 in axes[0]:
        cols = [np.full(tail_cols[0].size if tail_cols else 1, x1)]
        cols.extend(tail_cols)
        X = np.column_stack(cols)
        mask = np.ones(X.shape[0], dtype=bool)
        for S in sets:
            if S.kind == SetDescriptor.BOX:
                continue  # the cover box already enforces it
            if S.kind == SetDescriptor.BALL:
                mask &= np.linalg.norm(X - S.center, axis=1) <= S.radius
            elif S.kind == SetDescriptor.SIMPLEX:
                mask &= np.abs(X.sum(axis=1) - 1.0) <= 1.5 * float(np.max(upper - lower)) / resolution
                mask &= np.all(X >= 0, axis=1)
            elif S.kind == SetDescriptor.HALFSPACES:
                mask &= np.all(X @ S.normals.T <= S.offsets, axis=1)
            elif S.kind == SetDescriptor.WHOLE:
                continue
            else:
                raise CapabilityError(f"grid dual oracle cannot mask set kind {S.kind!r}")
        if not np.any(mask):
            continue
        Xm = X[mask]
        vals = _lagrangian_batch(problem, lam, Xm)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_pt = float(vals[j]), Xm[j]
    if best_pt is None:
        raise DomainError("no grid point fell inside the feasible set; refine the resolution")
    cell = float(np.linalg.norm((upper - lower) / max(resolution - 1, 1)))
    lip = _lipschitz_bound(problem, lam)
    if lip is None:
        # Empirical fallback: largest subgradient norm over a coarse sample.
        sample = best_pt[None, :]
        lip = 0.0
        for oracle, w in zip([problem.objective] + list(problem.constraints), np.concatenate([[1.0], lam])):
            g = as_max_type(oracle).eval(sample[0])[1] if w != 0 else None
            if g is not None:
                lip += abs(w) * float(np.linalg.norm(g))
    return DualValue(value=best_val, tolerance=lip * cell, mode="grid", minimizer=best_pt)


def _subgradient_min(problem, lam, sets, iters=20000):
    """Projected-subgradient inner oracle for dimensions beyond the grid."""
    from .proxmaps import bregman_project  # local import to stay cycle-free

    geom = problem.geom
    Q = sets[0]
    if len(sets) > 1:
        raise CapabilityError("subgradient dual oracle does not intersect restriction sets")
    lower, upper = Q.cover_box()
    R = float(np.linalg.norm(upper - lower))
    x = 0.5 * (lower + upper)
    parts = [problem.objective] + list(problem.constraints)
    weights = np.concatenate([[1.0], lam])
    best_val, best_pt = np.inf, x.copy()
    for t in range(iters):
        val = 0.0
        g = np.zeros_like(x)
        for w, oracle in zip(weights, parts):
            if w == 0.0:
                continue
            v_i, g_i = as_max_type(oracle).eval(x)
            val += w * v_i
            g = g + w * g_i
        if val < best_val:
            best_val, best_pt = val, x.copy()
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            return DualValue(value=float(val), tolerance=0.0, mode="subgradient", minimizer=x.copy())
        step = R / math.sqrt(t + 1.0) / gn
        x, _ = bregman_project(geom, Q, x - step * g)
    lip = _lipschitz_bound(problem, lam) or 1.0
    return DualValue(value=float(best_val), tolerance=lip * R / math.sqrt(iters), mode="subgradient", minimizer=best_pt)


def dual_value(
    problem: ProblemInstance,
    lam,
    restriction_D: float | None = None,
    resolution: int = GRID_RESOLUTION,
) -> DualValue:
    """Evaluate the dual function phi(lam) (or phi_D with a restriction).

    Affine Lagrangians are minimized exactly through support functions;
    otherwise a dense masked grid (dimension <= 3) or a projected-subgradient
    run supplies the value together with its accuracy bound.  Unbounded
    Lagrangians on unbounded sets yield -inf.
    """
    lam = as_vector(lam, len(problem.constraints)) if len(problem.constraints) else np.zeros(0)
    if np.any(lam < 0):
        raise ValueError("dual multipliers must be nonnegative")
    sets = [problem.Q]
    if restriction_D is not None:
        if not restriction_D > 0:
            raise ValueError("restriction D must be positive")
        ball = _restriction_ball(problem, restriction_D)
        sets = [ball] if problem.Q.kind == SetDescriptor.WHOLE else [problem.Q, ball]

    affine = _lagrangian_as_affine(problem, lam)
    if affine is not None:
        a, b = affine
        if len(sets) == 1:
            smin = sets[0].support_min(a)
            if math.isinf(smin):
                return DualValue(value=-math.inf, tolerance=0.0, mode="exact")
            return DualValue(value=smin + b, tolerance=0.0, mode="exact")

    if problem.Q.kind == SetDescriptor.WHOLE and restriction_D is None:
        # Nothing bounds the inner minimization and no support function
        # certifies the value; require a restriction level instead of guessing.
        raise CapabilityError(
            "dual values on an unbounded set need an affine Lagrangian or a restriction level D"
        )

    if problem.dim <= 3:
        return _grid_min(problem, lam, sets, resolution)
    return _subgradient_min(problem, lam, sets)


def slater_bound(problem: ProblemInstance, xhat) -> float:
    """Multiplier-size bound from a strictly feasible point:

        (f0(xhat) - f0*) * max_i M_i / (-f_i(xhat)).
    """
    xhat = as_vector(xhat, problem.dim)
    if problem.truth is None or problem.truth.f0star is None:
        raise ValueError("slater_bound needs the optimal value f0*")
    if problem.truth.M is None:
        raise ValueError("slater_bound needs declared constraint bounds M_i")
    vals = problem.constraint_values(xhat)
    if np.any(vals >= 0):
        raise ValueError("the supplied point is not strictly feasible")
    gap0 = f0_at(problem, xhat) - problem.truth.f0star
    return float(gap0 * np.max(problem.truth.M / (-vals)))


def f0_at(problem, x):
    return as_max_type(problem.objective).value(x)


def _empirical_M0(problem, run):
    geom = problem.geom
    worst = 0.0
    xs = run.iterates()
    f0 = as_max_type(problem.objective)
    for rec in run.records:
        if rec.i == 0:
            base = rec.y if rec.y is not None else xs[rec.k]
            worst = max(worst, geom.dual_norm(f0.eval(base)[1]))
    return worst


def gap_certificate(run, problem: ProblemInstance, restriction_D: float | None = None) -> DualCertificate:
    """Duality-gap certificate for a finished switching or unbounded-set run.

    Checks the primal-dual displays of the governing theorem against an
    independent dual oracle: the weighted primal average and the best
    objective value over the analysis window must exceed the dual value by at
    most M0 h (switching) or eps (unbounded, once the schedule sum crosses
    its threshold).  A Slater point, when declared, adds the multiplier-size
    bound on the pure duality gap.
    """
    est = run.estimate
    if est is None or est.sigma[0] <= 0:
        raise CertificateUnavailableError("no objective-type steps in the analysis window")
    lam = est.lambdas
    warnings = []

    if run.method == "unbounded":
        if restriction_D is None:
            restriction_D = problem.truth.D if problem.truth else None
        if restriction_D is None:
            raise ValueError("unbounded-method certificates need a restriction level D")
        dv = dual_value(problem, lam, restriction_D=restriction_D)
        eps = run.meta["eps"]
        D0 = run.meta["D0"]
        M = float(np.max(problem.truth.M)) if problem.truth and problem.truth.M is not None else None
        if M is None:
            raise ValueError("unbounded-method certificates need declared constraint bounds M")
        sigma_N = run.meta.get("sigma_N", 0.0)
        threshold = (restriction_D + D0) * M / (eps * math.sqrt(2.0 * D0))
        crossed = sigma_N > threshold
        gap = run.best_f0 - dv.value
        bound = eps
        holds = crossed and (gap <= bound + dv.tolerance)
        if not crossed:
            warnings.append(
                f"schedule sum {sigma_N:.3g} has not crossed the threshold {threshold:.3g}; bound not yet active"
            )
        return DualCertificate(
            lambdas=lam,
            dual_value=dv.value,
            dual_tolerance=dv.tolerance,
            dual_mode=dv.mode,
            primal_best=run.best_f0,
            weighted_primal=None,
            gap=gap,
            bound=bound,
            bound_holds=holds,
            warnings=warnings,
        )

    # Switching methods: certificate against phi(lambda*(N)).
    h_kN = run.meta["h_kN"]
    M0 = problem.truth.M0 if problem.truth else None
    empirical = False
    if M0 is None:
        M0 = _empirical_M0(problem, run)
        empirical = True
        warnings.append("M0 not declared; certificate uses the empirical trace maximum")
    dv = dual_value(problem, lam)
    obj_records = run.objective_window_records()
    weighted = sum(r.lam * r.f0 for r in obj_records) / est.sigma[0]
    primal_best = run.best_f0
    gap = primal_best - dv.value
    bound = M0 * h_kN
    # Grid values overestimate the true minimum, so these checks only tighten.
    holds = (weighted - dv.value <= bound + dv.tolerance) and (gap <= bound + dv.tolerance)

    slater_val = None
    slater_holds = None
    if problem.truth is not None and problem.truth.slater is not None and problem.truth.f0star is not None:
        slater_val = slater_bound(problem, problem.truth.slater)
        slater_holds = problem.truth.f0star - dv.value <= (M0 + slater_val) * h_kN + dv.tolerance

    attained = True
    if problem.truth is not None and problem.truth.lambda_star is None and problem.truth.slater is None:
        # No optimal dual solution is known; report the certificate anyway and
        # flag that the dual supremum may be unattained.
        attained = False
        warnings.append("dual optimum may be unattained; gap quality can degrade")

    return DualCertificate(
        lambdas=lam,
        dual_value=dv.value,
        dual_tolerance=dv.tolerance,
        dual_mode=dv.mode,
        primal_best=primal_best,
        weighted_primal=weighted,
        gap=gap,
        bound=bound,
        bound_holds=holds,
        h_kN=h_kN,
        slater_bound_value=slater_val,
        slater_holds=slater_holds,
        empirical_M0=empirical,
        attained=attained,
        warnings=warnings,
    )


def dual_supremum_scan(problem: ProblemInstance, lam_max: float = 1e6, points: int = 2000):
    """Scan sup_{lam >= 0} phi(lam) on a log-spaced grid (single constraint).

    Used to surface unattained dual suprema: returns (best value, best lam,
    attained flag) where the supremum is flagged unattained when it sits at
    the scan boundary and is still improving.
    """
    if len(problem.constraints) != 1:
        raise CapabilityError("the dual scan supports a single constraint")
    grid = np.concatenate([[0.0], np.geomspace(1e-6, lam_max, points)])
    vals = np.array([dual_value(problem, [l]).value for l in grid])
    j = int(np.argmax(vals))
    attained = j + 1 < grid.size
    return float(vals[j]), float(grid[j]), attained

"""Parametric prox subproblems and their univariate dual controls.

The central objects are, for a base point xbar and subgradient g,

    T(lam) = argmin_{x in Q} { lam <g, x> + beta(xbar, x) },
    phi(lam) = lam <g, xbar - T(lam)> - beta(xbar, T(lam)),

their composite analogues built on the linearization of a max-type function
plus a simple additive term, and the Bregman projection onto a linearized
constraint together with its Lagrange multiplier.

All subproblems are solved exactly, per (geometry, set) pair:

* euclidean x {whole-space, box, ball, halfspaces}: closed forms where they
  exist, otherwise a small exact KKT active-set enumeration (with a
  one-dimensional dual search when a ball constraint is active);
* entropy x simplex: multiplicative-weights closed forms with scalar
  root-finds for cut multipliers.

Unsupported pairs raise :class:`CapabilityError` instead of falling back to
inexact generic solvers.  Everything here is a pure function of immutable
inputs; concurrent calls are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import (
    CapabilityError,
    DirectionallyOptimal,
    DomainError,
    InfeasibleLevelError,
    InfeasibleProblemError,
    UnboundedPhiError,
    ZeroSubgradientError,
)
from .geometry import ProxGeometry, SetDescriptor, Vector, as_vector, validate_pair
from .oracles import CompositeTerm, ProblemInstance, as_max_type

_MAX_ENUM_ROWS = 14  # 2^rows KKT subsets; beyond this the pair is unsupported
_BRACKET_DOUBLINGS = 200


@dataclass(frozen=True, eq=False)
class ProxStepResult:
    """Solution of a parametric prox subproblem plus diagnostics."""

    point: np.ndarray
    lam: float
    phi_value: float
    breg: float
    displacement: float


class _ProjectionInfeasible(Exception):
    """Internal: the constraint system of a projection has no feasible point."""


def _result(geom: ProxGeometry, xbar: Vector, T: Vector, lam: float, phi: float) -> ProxStepResult:
    breg = geom.bregman(xbar, T)
    disp = geom.norm(xbar - T)
    if -1e-12 < phi < 0.0:
        phi = 0.0
    return ProxStepResult(point=T, lam=float(lam), phi_value=float(phi), breg=float(breg), displacement=float(disp))


# -- euclidean projection engine --------------------------------------------


def _ball_point(metric, u, c, omega):
    """argmin ||x-u||_B^2/2 + (omega/2)||x-c||^2, i.e. x = (B+wI)^{-1}(Bu+wc)."""
    if metric.diag is not None:
        return (metric.diag * u + omega * c) / (metric.diag + omega)
    w, V = metric._eigvals, metric._eigvecs
    rhs = metric.dense @ u + omega * c
    return V @ ((V.T @ rhs) / (w + omega))


def _project_ball(metric, u, c, r):
    d = u - c
    dist = float(np.linalg.norm(d))
    if dist <= r:
        return u.copy()
    if metric.is_identity:
        return c + (r / dist) * d

    def resid(omega):
        return float(np.linalg.norm(_ball_point(metric, u, c, omega) - c)) - r

    hi = 1.0
    while resid(hi) > 0:
        hi *= 2.0
        if hi > 1e18:
            raise UnboundedPhiError("ball projection dual search failed to bracket")
    omega = brentq(resid, 0.0, hi, xtol=1e-15, maxiter=200)
    return _ball_point(metric, u, c, omega)


def _project_single_row(metric, u, a, b):
    """Projection onto one halfspace <a,x> <= b; returns (x, multiplier)."""
    viol = float(a @ u) - b
    if viol <= 0:
        return u.copy(), 0.0
    denom = metric.inv_quad(a)
    if denom <= 0:
        raise _ProjectionInfeasible("halfspace normal is zero but the constraint is violated")
    nu = viol / denom
    return u - nu * metric.inv_apply(a), nu


def _project_box_clip(metric, u, lower, upper):
    if metric.diag is None:
        raise CapabilityError("box projections need a diagonal metric operator")
    return np.clip(u, lower, upper)


def _project_box_plus_row(metric, u, lower, upper, a, b):
    """Projection onto box intersect {<a,x> <= b}, diagonal metric.

    Exact one-dimensional dual search on the row multiplier: the clipped
    point x(nu) = clip(u - nu B^{-1} a) makes <a, x(nu)> piecewise linear and
    nonincreasing in nu, so the root is located by a breakpoint scan.
    """
    if metric.diag is None:
        raise CapabilityError("box projections need a diagonal metric operator")
    x0 = np.clip(u, lower, upper)
    if float(a @ x0) <= b + 0.0:
        return x0, 0.0
    inv = a / metric.diag  # B^{-1} a

    def point(nu):
        return np.clip(u - nu * inv, lower, upper)

    def h(nu):
        return float(a @ point(nu)) - b

    # The limit nu -> inf drives x to the box vertex minimizing <a, x>.
    limit = float(np.sum(np.where(a > 0, a * lower, a * upper))) - b
    if limit > 1e-12 * (1.0 + abs(b)):
        raise _ProjectionInfeasible("cut lies below the box support function")
    bps = []
    for i in range(u.size):
        if inv[i] == 0.0:
            continue
        for bound in (lower[i], upper[i]):
            nu = (u[i] - bound) / inv[i]
            if nu > 0:
                bps.append(nu)
    bps = sorted(set(bps))
    lo, h_lo = 0.0, h(0.0)
    for nu in bps:
        h_nu = h(nu)
        if h_nu <= 0.0:
            slope = (h_nu - h_lo) / (nu - lo) if nu > lo else 0.0
            root = lo - h_lo / slope if slope < 0 else nu
            return point(root), root
        lo, h_lo = nu, h_nu
    # Constant tail segment: h is flat at `limit` <= 0 here.
    return point(lo), lo


def _null_space_solve(metric, As, r):
    """Minimum-B-norm solution d of As d = r.

    Gaussian elimination with complete pivoting followed by a reduced solve
    over the free variables.  Neither the Gram matrix As B^{-1} As^T nor a
    plain LU of the saddle system survives the case of a tiny cut row paired
    with an axis face: both absorb the cut scale into O(1) entries, while
    pivoted substitution keeps it intact.  Raises LinAlgError on rank
    deficiency; callers treat that subset as redundant.
    """
    As = np.array(As, dtype=float)
    rhs = np.array(r, dtype=float)
    k, n = As.shape
    if k > n:
        raise np.linalg.LinAlgError("more active rows than dimensions")
    piv_cols = []
    for row in range(k):
        sub = np.abs(As[row:, :])
        prow, pcol = np.unravel_index(np.argmax(sub), sub.shape)
        prow += row
        if As[prow, pcol] == 0.0:
            raise np.linalg.LinAlgError("rank-deficient constraint rows")
        if prow != row:
            As[[row, prow]] = As[[prow, row]]
            rhs[[row, prow]] = rhs[[prow, row]]
        piv_cols.append(pcol)
        for r2 in range(row + 1, k):
            f = As[r2, pcol] / As[row, pcol]
            if f != 0.0:
                As[r2] = As[r2] - f * As[row]
                As[r2, pcol] = 0.0
                rhs[r2] = rhs[r2] - f * rhs[row]

    free_cols = [j for j in range(n) if j not in piv_cols]

    def back_substitute(free_vals, rhs_vec):
        d = np.zeros(n)
        d[free_cols] = free_vals
        for row in range(k - 1, -1, -1):
            pc = piv_cols[row]
            s = rhs_vec[row] - (As[row] @ d - As[row, pc] * d[pc])
            d[pc] = s / As[row, pc]
        return d

    p = back_substitute(np.zeros(len(free_cols)), rhs)
    if not free_cols:
        return p
    Z = np.column_stack([back_substitute(e, np.zeros(k)) for e in np.eye(len(free_cols))])
    BZ = np.column_stack([metric.apply(Z[:, j]) for j in range(Z.shape[1])])
    y = np.linalg.solve(Z.T @ BZ, -Z.T @ metric.apply(p))
    return p + Z @ y


def _solve_rows_kkt(metric, u, A, b, subset):
    """Equality-constrained projection on the rows in `subset`; returns (x, nu)."""
    S = list(subset)
    if not S:
        return u.copy(), np.zeros(0)
    As = A[S]
    r = b[S] - As @ u
    d = _null_space_solve(metric, As, r)
    x = u + d
    nu, *_ = np.linalg.lstsq(As.T, -metric.apply(d), rcond=None)
    return x, nu


def _solve_rows_ball_kkt(metric, u, A, b, subset, c, r):
    """Rows in `subset` active plus the ball boundary; 1-D search on omega."""
    S = list(subset)
    As = A[S] if S else np.zeros((0, u.size))
    bs = b[S] if S else np.zeros(0)
    n, k = u.size, len(S)

    def solve(omega):
        # [[B + wI, As^T], [As, 0]] [x; nu] = [Bu + wc; bs]
        top = np.hstack([_metric_matrix(metric) + omega * np.eye(n), As.T])
        bottom = np.hstack([As, np.zeros((k, k))])
        M = np.vstack([top, bottom])
        rhs = np.concatenate([metric.apply(u) + omega * c, bs])
        sol = np.linalg.solve(M, rhs)
        return sol[:n], sol[n:]

    def resid(omega):
        x, _ = solve(omega)
        return float(np.linalg.norm(x - c)) - r

    if resid(0.0) <= 0:
        return None  # ball inactive; plain row subset covers this candidate
    hi = 1.0
    for _ in range(_BRACKET_DOUBLINGS):
        if resid(hi) <= 0:
            break
        hi *= 2.0
    else:
        return None  # the affine slice never meets the ball
    omega = brentq(resid, 0.0, hi, xtol=1e-15, maxiter=200)
    x, nu = solve(omega)
    return x, nu, omega


def _metric_matrix(metric):
    if metric.diag is not None:
        return np.diag(metric.diag)
    return metric.dense


def _kkt_enumerate(metric, u, A, b, ball=None):
    """Exact projection onto {Ax <= b} (optionally intersected with a ball).

    Enumerates active subsets, solves each KKT system, and keeps the feasible
    candidate with nonnegative multipliers and least objective.  Returns
    (x, nu) with one multiplier per row of A.
    """
    R = A.shape[0]
    if R > _MAX_ENUM_ROWS:
        raise CapabilityError(f"projection with {R} linear constraints exceeds the active-set cap")
    best = None
    n = u.size
    absA = np.abs(A)
    absb = np.abs(b)

    def consider(x, nu_subset, subset):
        nu_tol = 1e-9 * (1.0 + (float(np.max(np.abs(nu_subset))) if len(subset) else 0.0))
        if len(subset) and np.min(nu_subset) < -nu_tol:
            return
        if R:
            # Feasibility is judged row-relatively so that tiny-scale cuts are
            # not swallowed by a global tolerance (they carry the whole step
            # when the iterate is already close to optimal).
            viol = A @ x - b
            row_scale = absA @ np.abs(x) + absb
            if np.any(viol > 1e-9 * row_scale):
                return
        if ball is not None:
            dist = float(np.linalg.norm(x - ball[0]))
            if dist > ball[1] * (1.0 + 1e-9):
                return
        obj = 0.5 * metric.quad(x - u)
        nonlocal best
        if best is None or obj < best[0]:
            nu = np.zeros(R)
            nu[list(subset)] = np.maximum(nu_subset, 0.0)
            best = (obj, x, nu)

    for size in range(min(R, n) + 1):
        for subset in combinations(range(R), size):
            try:
                x, nu = _solve_rows_kkt(metric, u, A, b, subset)
            except np.linalg.LinAlgError:
                continue
            consider(x, nu, subset)
            if ball is not None and size < n:
                try:
                    out = _solve_rows_ball_kkt(metric, u, A, b, subset, ball[0], ball[1])
                except np.linalg.LinAlgError:
                    out = None
                if out is not None:
                    consider(out[0], out[1], subset)
    if best is None:
        raise _ProjectionInfeasible("no feasible KKT candidate for the constraint system")
    return best[1], best[2]


def _box_rows(Q):
    n = Q.dim
    eye = np.eye(n)
    A = np.vstack([eye, -eye])
    b = np.concatenate([Q.upper, -Q.lower])
    return A, b


def _project_B(geom: ProxGeometry, Q: SetDescriptor, u: Vector, cuts=None):
    """B-norm projection of u onto Q intersected with extra rows ``cuts``.

    Returns (x, nu) where nu holds one multiplier per cut row.  Raises
    :class:`_ProjectionInfeasible` when the system is empty.
    """
    metric = geom.metric
    if cuts is None:
        Ac = np.zeros((0, u.size))
        bc = np.zeros(0)
    else:
        Ac, bc = np.atleast_2d(np.asarray(cuts[0], dtype=float)), np.asarray(cuts[1], dtype=float)
    k = Ac.shape[0]

    if Q.kind == SetDescriptor.WHOLE:
        if k == 0:
            return u.copy(), np.zeros(0)
        if k == 1:
            x, nu = _project_single_row(metric, u, Ac[0], float(bc[0]))
            return x, np.array([nu])
        x, nu = _kkt_enumerate(metric, u, Ac, bc)
        return x, nu

    if Q.kind == SetDescriptor.HALFSPACES:
        A = np.vstack([Q.normals, Ac])
        b = np.concatenate([Q.offsets, bc])
        if A.shape[0] == 1:
            x, nu = _project_single_row(metric, u, A[0], float(b[0]))
            return x, (np.array([nu]) if k else np.zeros(0))
        x, nu = _kkt_enumerate(metric, u, A, b)
        return x, nu[Q.normals.shape[0]:]

    if Q.kind == SetDescriptor.BOX:
        if k == 0:
            return _project_box_clip(metric, u, Q.lower, Q.upper), np.zeros(0)
        if k == 1 and metric.diag is not None:
            x, nu = _project_box_plus_row(metric, u, Q.lower, Q.upper, Ac[0], float(bc[0]))
            return x, np.array([nu])
        Ab, bb = _box_rows(Q)
        A = np.vstack([Ab, Ac])
        b = np.concatenate([bb, bc])
        x, nu = _kkt_enumerate(metric, u, A, b)
        return x, nu[Ab.shape[0]:]

    if Q.kind == SetDescriptor.BALL:
        if k == 0:
            return _project_ball(metric, u, Q.center, Q.radius), np.zeros(0)
        x, nu = _kkt_enumerate(metric, u, Ac, bc, ball=(Q.center, Q.radius))
        return x, nu

    raise CapabilityError(f"no euclidean projection for set kind {Q.kind!r}")


# -- entropy / simplex engine ------------------------------------------------


def _entropy_T(xbar, a, lam):
    """argmin lam <a, x> + beta(xbar, x) over the simplex: x_i ~ xbar_i e^{-lam a_i}."""
    logw = np.log(xbar) - lam * a
    w = np.exp(logw - logsumexp(logw))
    w = np.maximum(w, 1e-300)
    return w / np.sum(w)


def _entropy_phi(xbar, g, lam):
    """phi(lam) = lam <g, xbar> + log sum_i xbar_i e^{-lam g_i}, exactly the max value."""
    return lam * float(g @ xbar) + float(logsumexp(np.log(xbar) - lam * g))


def _entropy_cut_project(xbar, a, b):
    """Bregman projection onto {<a,x> <= b} in the simplex; returns (x, nu)."""
    if float(a @ xbar) <= b:
        return xbar.copy(), 0.0
    amin = float(np.min(a))
    scale = 1.0 + abs(b) + float(np.max(np.abs(a)))
    if b < amin - 1e-12 * scale:
        raise _ProjectionInfeasible("cut lies below the simplex support function")
    if b <= amin + 1e-12 * scale:
        raise CapabilityError("cut touches the simplex boundary; the interior projection diverges")

    def h(nu):
        return float(a @ _entropy_T(xbar, a, nu)) - b

    hi = 1.0
    for _ in range(_BRACKET_DOUBLINGS):
        if h(hi) <= 0:
            break
        hi *= 2.0
    else:
        raise CapabilityError("cut multiplier search failed to bracket")
    nu = brentq(h, 0.0, hi, xtol=1e-15, maxiter=200)
    return _entropy_T(xbar, a, nu), nu


# -- domain handling ---------------------------------------------------------


def _check_base_point(geom, Q, xbar):
    xbar = as_vector(xbar, geom.dim)
    if geom.kind == ProxGeometry.ENTROPY and np.any(xbar <= 0):
        raise DomainError("entropy prox maps need a strictly positive base point")
    if not Q.contains(xbar, tol=1e-7):
        raise DomainError("base point lies outside the feasible set")
    return xbar


def _composite_domain(problem: ProblemInstance):
    """Effective domain of a composite step: Q intersected with psi's set.

    Returns (base_set, extra_rows) where extra_rows is None or (A, b).
    """
    Q = problem.Q
    S = problem.psi.indicator_set()
    if S is None or S.same_as(Q):
        return Q, None
    if Q.kind == SetDescriptor.WHOLE:
        return S, None
    if S.kind == SetDescriptor.WHOLE:
        return Q, None
    if S.kind == SetDescriptor.HALFSPACES:
        return Q, (S.normals, S.offsets)
    if Q.kind == SetDescriptor.HALFSPACES:
        return S, (Q.normals, Q.offsets)
    raise CapabilityError("cannot intersect the indicator set with Q in closed form")


# -- public operations --------------------------------------------------------


def bregman_project(geom: ProxGeometry, Q: SetDescriptor, u: Vector, cuts=None):
    """Bregman projection of u onto Q (optionally with extra cut rows).

    Euclidean geometries only; returns (point, cut multipliers).
    """
    validate_pair(geom, Q)
    if not geom.is_euclidean:
        raise CapabilityError("bregman_project supports euclidean geometries; use prox maps on the simplex")
    u = as_vector(u, geom.dim)
    try:
        return _project_B(geom, Q, u, cuts)
    except _ProjectionInfeasible as exc:
        raise InfeasibleProblemError(str(exc)) from exc


def prox_step(geom: ProxGeometry, Q: SetDescriptor, xbar: Vector, g, lam: float) -> ProxStepResult:
    """Solve T(lam) = argmin_{x in Q} { lam <g,x> + beta(xbar, x) }."""
    validate_pair(geom, Q)
    xbar = _check_base_point(geom, Q, xbar)
    g = as_vector(g, geom.dim)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if lam == 0.0:
        return _result(geom, xbar, xbar.copy(), 0.0, 0.0)
    if geom.is_euclidean:
        u = xbar - lam * geom.metric.inv_apply(g)
        try:
            T, _ = _project_B(geom, Q, u)
        except _ProjectionInfeasible as exc:  # Q itself is nonempty, so unreachable
            raise InfeasibleProblemError(str(exc)) from exc
        phi = lam * float(g @ (xbar - T)) - geom.bregman(xbar, T)
    else:
        T = _entropy_T(xbar, g, lam)
        phi = _entropy_phi(xbar, g, lam)
    return _result(geom, xbar, T, lam, phi)


def phi_value_and_derivative(geom, Q, xbar, g, lam) -> tuple[float, float]:
    """phi(lam) and phi'(lam) = <g, xbar - T(lam)>; phi is convex nondecreasing."""
    res = prox_step(geom, Q, xbar, g, lam)
    xbar = as_vector(xbar, geom.dim)
    g = as_vector(g, geom.dim)
    return res.phi_value, float(g @ (xbar - res.point))


def _support_slack(geom, Q, xbar, g):
    """max_{x in Q} <g, xbar - x>, or None when Q has no support function."""
    try:
        smin = Q.support_min(g)
    except CapabilityError:
        return None
    return float(g @ xbar) - smin


def solve_phi_equation(
    geom: ProxGeometry,
    Q: SetDescriptor,
    xbar: Vector,
    g,
    target: float,
    rel_tol: float = 1e-12,
) -> ProxStepResult:
    """Find the largest lam with phi(lam) = target (> 0) and return T(lam).

    phi is convex and nondecreasing with phi(0) = 0, so the equation has a
    unique solution whenever phi is unbounded; when xbar already minimizes
    <g, .> over Q the function vanishes identically and
    :class:`DirectionallyOptimal` is raised for the caller to decide
    termination.
    """
    validate_pair(geom, Q)
    xbar = _check_base_point(geom, Q, xbar)
    g = as_vector(g, geom.dim)
    if not target > 0:
        raise ValueError("target must be positive")
    gnorm = geom.dual_norm(g)
    if gnorm == 0.0:
        raise ZeroSubgradientError("cannot solve the step equation with a zero subgradient")

    slack = _support_slack(geom, Q, xbar, g)
    if slack is not None and slack <= 1e-13 * (1.0 + abs(float(g @ xbar))):
        raise DirectionallyOptimal(xbar)

    if geom.is_euclidean and Q.kind == SetDescriptor.WHOLE:
        lam = math.sqrt(2.0 * target) / gnorm
        return prox_step(geom, Q, xbar, g, lam)

    def phi(lam):
        return prox_step(geom, Q, xbar, g, lam)

    # Unconstrained root lower-bounds the constrained one; double from there.
    lo, hi = 0.0, math.sqrt(2.0 * target) / gnorm
    res = phi(hi)
    doublings = 0
    while res.phi_value < target:
        lo, hi = hi, 2.0 * hi
        res = phi(hi)
        doublings += 1
        if doublings > _BRACKET_DOUBLINGS:
            if res.phi_value <= 1e-12 * target:
                raise DirectionallyOptimal(xbar)
            raise UnboundedPhiError("failed to bracket the step equation after the doubling cap")

    lam = hi
    for _ in range(200):
        if abs(res.phi_value - target) <= rel_tol * target:
            break
        deriv = float(g @ (xbar - res.point))
        newton = lam - (res.phi_value - target) / deriv if deriv > 0 else lo
        if res.phi_value >= target:
            hi = lam
        else:
            lo = lam
        lam = newton if lo < newton < hi else 0.5 * (lo + hi)
        res = phi(lam)
        if hi - lo <= 1e-15 * hi:
            break
    return res


def composite_prox_step(geom: ProxGeometry, xbar: Vector, problem: ProblemInstance, lam: float) -> ProxStepResult:
    """Solve the composite prox subproblem

        T^(lam) = argmin_x { lam [ l_xbar(x) + psi(x) ] + beta(xbar, x) }

    over the effective domain, where l_xbar is the max of the component
    linearizations at xbar.
    """
    f = as_max_type(problem.objective)
    return _composite_step(geom, xbar, f, problem.psi, problem, lam)


def _composite_step(geom, xbar, f, psi, problem, lam):
    dom, rows = _composite_domain(problem)
    validate_pair(geom, dom)
    xbar = _check_base_point(geom, dom, xbar) if rows is None else as_vector(xbar, geom.dim)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    evals = f.eval_components(xbar)
    c_psi = psi.linear_part(geom.dim)
    F_xbar = max(v for v, _ in evals) + psi.value(xbar)

    if lam == 0.0:
        return _result(geom, xbar, xbar.copy(), 0.0, 0.0)

    if geom.is_euclidean:
        if f.m == 1:
            v0, g0 = evals[0]
            u = xbar - lam * geom.metric.inv_apply(g0 + c_psi)
            try:
                T, _ = _project_B(geom, dom, u, rows)
            except _ProjectionInfeasible as exc:
                raise InfeasibleProblemError(str(exc)) from exc
        else:
            T = _epigraph_argmin(geom, dom, rows, xbar, evals, c_psi, lam)
    else:
        if f.m != 1 or psi.kind == CompositeTerm.LINEAR:
            raise CapabilityError("entropy composite steps support a single component and set psi")
        T = _entropy_T(xbar, evals[0][1], lam)

    ell_T = max(v + float(g @ (T - xbar)) for v, g in evals) + float(c_psi @ T)
    phi = lam * (F_xbar - ell_T) - geom.bregman(xbar, T)
    return _result(geom, xbar, T, lam, phi)


def _epigraph_argmin(geom, dom, rows, xbar, evals, c_psi, lam):
    """Exact KKT enumeration for min lam*max_i lhat_i(x) + beta(xbar,x).

    Active components A share the max value with simplex weights summing to
    lam; active set rows S are tight.  Euclidean geometry, no ball support.
    """
    metric = geom.metric
    n = geom.dim
    if dom.kind == SetDescriptor.WHOLE:
        A_rows = np.zeros((0, n))
        b_rows = np.zeros(0)
    elif dom.kind == SetDescriptor.HALFSPACES:
        A_rows, b_rows = dom.normals, dom.offsets
    elif dom.kind == SetDescriptor.BOX:
        A_rows, b_rows = _box_rows(dom)
    else:
        raise CapabilityError("multi-component composite steps support whole/halfspace/box domains")
    if rows is not None:
        A_rows = np.vstack([A_rows, rows[0]])
        b_rows = np.concatenate([b_rows, rows[1]])
    R = A_rows.shape[0]
    if R > _MAX_ENUM_ROWS:
        raise CapabilityError("composite step constraint count exceeds the active-set cap")

    m = len(evals)
    values = np.array([v for v, _ in evals])
    grads = np.stack([g for _, g in evals])
    Bmat = _metric_matrix(metric)
    absA = np.abs(A_rows)
    absb = np.abs(b_rows)
    best = None

    def lhat(x):
        return values + grads @ (x - xbar) + float(c_psi @ x)

    for a_size in range(1, m + 1):
        for A_set in combinations(range(m), a_size):
            for s_size in range(0, R + 1):
                for S_set in combinations(range(R), s_size):
                    kA, kS = len(A_set), len(S_set)
                    dim = n + kA + kS
                    M = np.zeros((dim, dim))
                    rhs = np.zeros(dim)
                    # stationarity: Bx + G_A^T nu + A_S^T eta = B xbar - lam c
                    M[:n, :n] = Bmat
                    M[:n, n:n + kA] = grads[list(A_set)].T
                    M[:n, n + kA:] = A_rows[list(S_set)].T
                    rhs[:n] = metric.apply(xbar) - lam * c_psi
                    # sum of component weights equals lam
                    M[n, n:n + kA] = 1.0
                    rhs[n] = lam
                    # active components share the max value
                    for j, i in enumerate(A_set[1:]):
                        gdiff = grads[i] - grads[A_set[0]]
                        M[n + 1 + j, :n] = gdiff
                        rhs[n + 1 + j] = float(gdiff @ xbar) - (values[i] - values[A_set[0]])
                    # tight set rows
                    for j, r_i in enumerate(S_set):
                        M[n + kA + j, :n] = A_rows[r_i]
                        rhs[n + kA + j] = b_rows[r_i]
                    try:
                        sol = np.linalg.solve(M, rhs)
                    except np.linalg.LinAlgError:
                        continue
                    x = sol[:n]
                    nu = sol[n:n + kA]
                    eta = sol[n + kA:]
                    tol_mult = 1e-9 * (1.0 + lam)
                    if np.any(nu < -tol_mult) or (kS and np.any(eta < -1e-9 * (1.0 + np.max(np.abs(eta))))):
                        continue
                    lv = lhat(x)
                    tmax = float(np.max(lv))
                    if lv[list(A_set)].min() < tmax - 1e-8 * (1.0 + abs(tmax)):
                        continue
                    if R:
                        viol = A_rows @ x - b_rows
                        if np.any(viol > 1e-9 * (absA @ np.abs(x) + absb)):
                            continue
                    obj = lam * tmax + geom.bregman(xbar, x)
                    if best is None or obj < best[0]:
                        best = (obj, x)
    if best is None:
        raise InfeasibleProblemError("composite step constraint system has no feasible point")
    return best[1]


def known_optimum_step(geom: ProxGeometry, xbar: Vector, problem: ProblemInstance, fstar: float) -> ProxStepResult:
    """Step of the known-optimum rule: the Bregman projection of xbar onto

        { x : l_xbar(x) + psi(x) <= fstar }

    with the optimal multiplier of the level constraint reported as lam.
    When F(xbar) <= fstar the step degenerates to lam = 0, T = xbar.
    """
    f = as_max_type(problem.objective)
    return _known_optimum(geom, xbar, f, problem.psi, problem, fstar)


def _known_optimum(geom, xbar, f, psi, problem, fstar):
    dom, rows = _composite_domain(problem)
    validate_pair(geom, dom)
    xbar = as_vector(xbar, geom.dim)
    evals = f.eval_components(xbar)
    c_psi = psi.linear_part(geom.dim)
    F_xbar = max(v for v, _ in evals) + psi.value(xbar)
    if F_xbar <= fstar:
        return _result(geom, xbar, xbar.copy(), 0.0, 0.0)

    # Level cuts: v_i + <g_i, x - xbar> + <c, x> <= fstar for every component.
    cut_A = np.stack([g + c_psi for _, g in evals])
    cut_b = np.array([fstar - v + float(g @ xbar) for v, g in evals])

    if geom.is_euclidean:
        if rows is not None:
            cut_A = np.vstack([cut_A, rows[0]])
            cut_b = np.concatenate([cut_b, rows[1]])
        try:
            T, nu = _project_B(geom, dom, xbar, (cut_A, cut_b))
        except _ProjectionInfeasible as exc:
            raise InfeasibleLevelError(
                "level set of the known-optimum step is empty; the supplied optimum is too small"
            ) from exc
        lam = float(np.sum(nu[: f.m]))
    else:
        if f.m != 1 or psi.kind == CompositeTerm.LINEAR:
            raise CapabilityError("entropy known-optimum steps support a single component and set psi")
        try:
            T, lam = _entropy_cut_project(xbar, cut_A[0], float(cut_b[0]))
        except _ProjectionInfeasible as exc:
            raise InfeasibleLevelError(
                "level set of the known-optimum step is empty; the supplied optimum is too small"
            ) from exc

    ell_T = max(v + float(g @ (T - xbar)) for v, g in evals) + float(c_psi @ T)
    phi = lam * (F_xbar - ell_T) - geom.bregman(xbar, T)
    return _result(geom, xbar, T, lam, phi)


def semi_composite_feasibility_step(geom, xbar, problem: ProblemInstance) -> ProxStepResult:
    """Known-optimum step applied to the semi-composite constraint with level 0."""
    f = problem.constraint_max()
    return _known_optimum(geom, xbar, f, problem.psi, problem, 0.0)


def linearized_constraint_projection(geom: ProxGeometry, Q: SetDescriptor, xk: Vector, f_i) -> tuple[ProxStepResult, float]:
    """Bregman projection of xk onto { x in Q : f_i(xk) + <f_i'(xk), x - xk> <= 0 }.

    Returns the step result together with the optimal multiplier of the
    linear inequality; the multiplier is strictly positive whenever the
    projection moves.  An infeasible linearization certifies infeasibility of
    the underlying problem (f_i >= its linearization everywhere).
    """
    validate_pair(geom, Q)
    xk = _check_base_point(geom, Q, xk)
    v, g = f_i.eval(xk)
    g = as_vector(g, geom.dim)
    if v <= 0:
        res = _result(geom, xk, xk.copy(), 0.0, 0.0)
        return res, 0.0
    gnorm = geom.dual_norm(g)
    if gnorm == 0.0:
        raise InfeasibleProblemError("violated constraint with zero subgradient is unsatisfiable")
    rhs = float(g @ xk) - v
    slack = _support_slack(geom, Q, xk, g)
    if slack is not None and slack < v - 1e-12 * (1.0 + abs(v)):
        raise InfeasibleProblemError(
            "linearized constraint lies below its minimum over Q; the problem is infeasible"
        )
    if geom.is_euclidean:
        try:
            T, nu = _project_B(geom, Q, xk, (g[None, :], np.array([rhs])))
        except _ProjectionInfeasible as exc:
            raise InfeasibleProblemError(str(exc)) from exc
        mult = float(nu[0])
    else:
        try:
            T, mult = _entropy_cut_project(xk, g, rhs)
        except _ProjectionInfeasible as exc:
            raise InfeasibleProblemError(str(exc)) from exc
    phi = mult * float(g @ (xk - T)) - geom.bregman(xk, T)
    res = _result(geom, xk, T, mult, phi)
    return res, mult

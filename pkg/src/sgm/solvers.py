"""The iteration drivers: six subgradient methods plus the classical comparator.

Every run is single-threaded and deterministic: identical inputs produce
bit-identical traces.  Per-iteration records store the dual step size, the
primal bound, function values at the method's analysis point (the current
iterate, or the trial point y_k for the double-step and unbounded methods),
and the next iterate.  Directional proximity diagnostics are attached only
when the instance carries a known minimizer; they never influence control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dualcert import MultiplierEstimate
from .errors import (
    DirectionallyOptimal,
    HorizonTooShortError,
    InfeasibleProblemError,
    ZeroSubgradientError,
)
from .oracles import ProblemInstance, as_max_type
from .proxmaps import (
    bregman_project,
    known_optimum_step,
    linearized_constraint_projection,
    semi_composite_feasibility_step,
    solve_phi_equation,
)
from .schedules import GammaSchedule, StepSchedule

OBJECTIVE = "objective"
CONSTRAINT = "constraint"
DOUBLE_2A = "double-2a"
DOUBLE_2B = "double-2b"
STALLED = "stalled"

COMPLETED = "completed"
DIRECTIONALLY_OPTIMAL = "directionally-optimal"


@dataclass(eq=False)
class IterationRecord:
    k: int
    step_kind: str
    i: int  # active oracle index; 0 means the objective
    h: float
    tau_or_gamma: float
    lam: float  # dual step size; aggregation weight a_k for the unbounded method
    x_next: np.ndarray
    f0: float
    max_fi: float
    F: float
    breg_step: float
    delta: float | None = None
    y: np.ndarray | None = None
    r_all: np.ndarray | None = None  # exhaustive-mode projection sizes r_k^i


@dataclass(eq=False)
class RunResult:
    method: str
    problem: str
    x0: np.ndarray
    records: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    best_f0: float | None = None
    best_k: int | None = None
    x_best: np.ndarray | None = None
    window: tuple[int, int] | None = None
    estimate: MultiplierEstimate | None = None
    checkpoints: dict | None = None
    termination: str = COMPLETED
    meta: dict = field(default_factory=dict)

    def iterates(self):
        """x_0, x_1, ..., reconstructed from the trace."""
        xs = [self.x0]
        xs.extend(rec.x_next for rec in self.records)
        return xs

    def objective_window_records(self):
        lo, hi = self.window if self.window else (0, len(self.records))
        return [r for r in self.records if r.i == 0 and lo <= r.k < hi]


def _delta_measure(geom, g, base, x_next, xstar):
    """<g, base - x*> / <g, d> along the step direction d; None for a null step."""
    step = base - x_next
    nrm = geom.norm(step)
    if nrm == 0.0:
        return None
    den = float(g @ step)
    if den <= 0.0:
        return None
    return float(g @ (base - xstar)) * nrm / den


def _constraint_values(problem, x):
    if not problem.constraints:
        return np.nan, np.nan
    vals = problem.constraint_values(x)
    return float(np.max(vals)), vals


def _finish(result, records, problem, best_pool):
    """best_pool: iterable of (k, f0, point) candidates for the best value."""
    result.records = records
    if records:
        result.x_final = records[-1].x_next
    else:
        result.x_final = result.x0
    best = None
    for k, v, pt in best_pool:
        if best is None or v < best[1]:
            best = (k, v, pt)
    if best is not None:
        result.best_k, result.best_f0, result.x_best = best
    return result


def _window_estimate(records, window, m):
    lo, hi = window
    sigma = np.zeros(m + 1)
    counts = np.zeros(m + 1, dtype=int)
    for rec in records:
        if lo <= rec.k < hi and rec.i >= 0:
            sigma[rec.i] += rec.lam
            counts[rec.i] += 1
    lambdas = sigma[1:] / sigma[0] if sigma[0] > 0 else None
    return MultiplierEstimate(window=(lo, hi), sigma=sigma, lambdas=lambdas, counts=counts)


def run_basic(problem: ProblemInstance, schedule: StepSchedule, num_steps: int) -> RunResult:
    """Basic method: solve phi_{x_k}(lam_k) = h_k^2 / 2 and step to T(lam_k)."""
    geom, Q = problem.geom, problem.Q
    f0 = problem.objective
    xstar = problem.truth.xstar if problem.truth else None
    result = RunResult(method="basic", problem=problem.name, x0=problem.x0.copy())
    result.meta = {"num_steps": num_steps, "schedule": schedule.kind, "scale": schedule.scale}
    records = []
    x = problem.x0.copy()
    for k in range(num_steps):
        v, g = f0.eval(x)
        h = schedule.h(k)
        try:
            res = solve_phi_equation(geom, Q, x, g, 0.5 * h * h)
        except DirectionallyOptimal:
            result.termination = DIRECTIONALLY_OPTIMAL
            break
        max_fi, _ = _constraint_values(problem, x)
        delta = _delta_measure(geom, g, x, res.point, xstar) if xstar is not None else None
        records.append(
            IterationRecord(
                k=k,
                step_kind=OBJECTIVE,
                i=0,
                h=h,
                tau_or_gamma=schedule.tau(k),
                lam=res.lam,
                x_next=res.point,
                f0=v,
                max_fi=max_fi,
                F=v + problem.psi.value(x),
                breg_step=res.breg,
                delta=delta,
            )
        )
        x = res.point
    pool = ((rec.k, rec.f0, (problem.x0 if rec.k == 0 else records[rec.k - 1].x_next)) for rec in records)
    return _finish(result, records, problem, pool)


def run_composite_known_opt(problem: ProblemInstance, num_steps: int, fstar: float | None = None) -> RunResult:
    """Composite method with known optimal value: level-set projection steps."""
    geom = problem.geom
    if fstar is None:
        if problem.truth is None or problem.truth.Fstar is None:
            raise ValueError("composite known-optimum run needs F*; none declared on the instance")
        fstar = problem.truth.Fstar
    result = RunResult(method="composite", problem=problem.name, x0=problem.x0.copy())
    result.meta = {"num_steps": num_steps, "fstar": fstar}
    records = []
    x = problem.x0.copy()
    for k in range(num_steps):
        res = known_optimum_step(geom, x, problem, fstar)
        Fx = problem.F(x)
        records.append(
            IterationRecord(
                k=k,
                step_kind=OBJECTIVE,
                i=0,
                h=math.nan,
                tau_or_gamma=math.nan,
                lam=res.lam,
                x_next=res.point,
                f0=problem.objective_max().value(x),
                max_fi=_constraint_values(problem, x)[0],
                F=Fx,
                breg_step=res.breg,
            )
        )
        x = res.point
    pool = ((rec.k, rec.F, (problem.x0 if rec.k == 0 else records[rec.k - 1].x_next)) for rec in records)
    return _finish(result, records, problem, pool)


def run_double_step(problem: ProblemInstance, schedule: StepSchedule, num_steps: int) -> RunResult:
    """Double-step method for the semi-composite problem  max_i f_i + psi <= 0.

    Step 1 improves feasibility with a known-optimum step at level zero;
    step 2 either accepts it (2a, large move) or makes an objective step at
    y_k (2b).  Records hold values at the trial point y_k.
    """
    geom, Q = problem.geom, problem.Q
    if not problem.constraints:
        raise ValueError("double-step run needs at least one constraint component")
    kN = schedule.window_start(num_steps)
    f0 = problem.objective
    xstar = problem.truth.xstar if problem.truth else None
    result = RunResult(method="double-step", problem=problem.name, x0=problem.x0.copy())
    result.window = (kN, num_steps)
    result.meta = {
        "num_steps": num_steps,
        "schedule": schedule.kind,
        "scale": schedule.scale,
        "window_start": kN,
        "h_kN": schedule.h(kN),
    }
    records = []
    x = problem.x0.copy()
    for k in range(num_steps):
        h = schedule.h(k)
        feas = semi_composite_feasibility_step(geom, x, problem)
        y = feas.point
        v0, g0 = f0.eval(y)
        max_fi, _ = _constraint_values(problem, y)
        Fy = problem.constraint_value(y)
        if feas.breg >= 0.5 * h * h:
            records.append(
                IterationRecord(
                    k=k,
                    step_kind=DOUBLE_2A,
                    i=1,
                    h=h,
                    tau_or_gamma=schedule.tau(k),
                    lam=feas.lam,
                    x_next=y,
                    f0=v0,
                    max_fi=max_fi,
                    F=Fy,
                    breg_step=feas.breg,
                    y=y,
                )
            )
            x = y
            continue
        try:
            res = solve_phi_equation(geom, Q, y, g0, 0.5 * h * h)
        except DirectionallyOptimal:
            result.termination = DIRECTIONALLY_OPTIMAL
            break
        delta = _delta_measure(geom, g0, y, res.point, xstar) if xstar is not None else None
        records.append(
            IterationRecord(
                k=k,
                step_kind=DOUBLE_2B,
                i=0,
                h=h,
                tau_or_gamma=schedule.tau(k),
                lam=res.lam,
                x_next=res.point,
                f0=v0,
                max_fi=max_fi,
                F=Fy,
                breg_step=res.breg,
                delta=delta,
                y=y,
            )
        )
        x = res.point
    pool = ((rec.k, rec.f0, rec.y) for rec in records if rec.step_kind == DOUBLE_2B and rec.k >= kN)
    return _finish(result, records, problem, pool)


def _checkpoint_targets(schedule, num_steps):
    targets = {}
    p = 1
    while 2 ** p <= num_steps:
        P = 2 ** p
        try:
            targets[P] = schedule.window_start(P)
        except HorizonTooShortError:
            pass
        p += 1
    return targets


def _switching_run(problem, schedule, num_steps, method, select, exhaustive, checkpoint_doubling):
    geom, Q = problem.geom, problem.Q
    if not problem.constraints:
        raise ValueError("switching runs need functional constraints")
    kN = schedule.window_start(num_steps)
    f0 = problem.objective
    m = problem.m
    result = RunResult(method=method, problem=problem.name, x0=problem.x0.copy())
    result.window = (kN, num_steps)
    result.meta = {
        "num_steps": num_steps,
        "schedule": schedule.kind,
        "scale": schedule.scale,
        "window_start": kN,
        "h_kN": schedule.h(kN),
    }
    targets = _checkpoint_targets(schedule, num_steps) if checkpoint_doubling else {}
    acc = {P: np.zeros(m + 1) for P in targets}
    records = []
    x = problem.x0.copy()
    for k in range(num_steps):
        h = schedule.h(k)
        rec = select(geom, Q, problem, x, k, h, schedule, exhaustive)
        if rec is None:
            # The current point minimizes the objective's linear model over Q.
            # Feasible: it solves the problem, stop.  Infeasible: the step
            # equation is transiently unsolvable until h_k decays enough for a
            # constraint step to fire, so record a stall and keep going.
            if float(np.max(problem.constraint_values(x))) <= 0:
                result.termination = DIRECTIONALLY_OPTIMAL
                break
            rec = IterationRecord(
                k=k,
                step_kind=STALLED,
                i=-1,
                h=h,
                tau_or_gamma=schedule.tau(k),
                lam=0.0,
                x_next=x.copy(),
                f0=f0_value(problem, x),
                max_fi=float(np.max(problem.constraint_values(x))),
                F=math.nan,
                breg_step=0.0,
            )
        records.append(rec)
        if rec.i >= 0:
            for P, start in targets.items():
                if start <= k < P:
                    acc[P][rec.i] += rec.lam
        x = rec.x_next
    result.estimate = _window_estimate(records, (kN, num_steps), m)
    if checkpoint_doubling:
        result.checkpoints = {
            P: MultiplierEstimate(
                window=(targets[P], P),
                sigma=acc[P],
                lambdas=(acc[P][1:] / acc[P][0] if acc[P][0] > 0 else None),
                counts=np.zeros(m + 1, dtype=int),
            )
            for P in targets
            if P <= len(records)
        }
    pool = (
        (rec.k, rec.f0, (problem.x0 if rec.k == 0 else records[rec.k - 1].x_next))
        for rec in records
        if rec.i == 0 and rec.k >= kN
    )
    return _finish(result, records, problem, pool)


def _select_switch_1(geom, Q, problem, x, k, h, schedule, exhaustive):
    """Projection-size test: switch to constraint i when beta(x, T_i) >= h^2/2."""
    threshold = 0.5 * h * h
    chosen = None
    r_all = np.full(problem.m, np.nan) if exhaustive else None
    for idx, ci in enumerate(problem.constraints):
        res_i, mult = linearized_constraint_projection(geom, Q, x, ci)
        if exhaustive:
            r_all[idx] = res_i.breg
        if res_i.breg >= threshold and chosen is None:
            chosen = (idx, res_i, mult)
            if not exhaustive:
                break
    vals = problem.constraint_values(x)
    max_fi = float(np.max(vals))
    if chosen is not None:
        idx, res_i, mult = chosen
        return IterationRecord(
            k=k,
            step_kind=CONSTRAINT,
            i=idx + 1,
            h=h,
            tau_or_gamma=schedule.tau(k),
            lam=mult,
            x_next=res_i.point,
            f0=f0_value(problem, x),
            max_fi=max_fi,
            F=math.nan,
            breg_step=res_i.breg,
            r_all=r_all,
        )
    v, g = as_max_type(problem.objective).eval(x)
    try:
        res = solve_phi_equation(geom, Q, x, g, threshold)
    except DirectionallyOptimal:
        return None
    xstar = problem.truth.xstar if problem.truth else None
    delta = _delta_measure(geom, g, x, res.point, xstar) if xstar is not None else None
    return IterationRecord(
        k=k,
        step_kind=OBJECTIVE,
        i=0,
        h=h,
        tau_or_gamma=schedule.tau(k),
        lam=res.lam,
        x_next=res.point,
        f0=v,
        max_fi=max_fi,
        F=math.nan,
        breg_step=res.breg,
        delta=delta,
        r_all=r_all,
    )


def _select_switch_2(geom, Q, problem, x, k, h, schedule, exhaustive):
    """Fixed-step test: switch to constraint i when lam_{i,k} f_i(x) >= h^2."""
    threshold = 0.5 * h * h
    vals = problem.constraint_values(x)
    max_fi = float(np.max(vals))
    for idx, ci in enumerate(problem.constraints):
        if vals[idx] <= 0:
            continue  # lam >= 0 makes the switch test impossible
        _, g_i = ci.eval(x)
        try:
            res_i = solve_phi_equation(geom, Q, x, g_i, threshold)
        except DirectionallyOptimal as exc:
            # x minimizes the linearization of a violated constraint, so
            # min_Q f_i >= f_i(x) > 0: the problem is infeasible.
            raise InfeasibleProblemError(
                f"constraint {idx + 1} cannot be reduced below {vals[idx]:.3g} over Q"
            ) from exc
        if res_i.lam * vals[idx] >= h * h:
            return IterationRecord(
                k=k,
                step_kind=CONSTRAINT,
                i=idx + 1,
                h=h,
                tau_or_gamma=schedule.tau(k),
                lam=res_i.lam,
                x_next=res_i.point,
                f0=f0_value(problem, x),
                max_fi=max_fi,
                F=math.nan,
                breg_step=res_i.breg,
            )
    v, g = as_max_type(problem.objective).eval(x)
    try:
        res = solve_phi_equation(geom, Q, x, g, threshold)
    except DirectionallyOptimal:
        return None
    xstar = problem.truth.xstar if problem.truth else None
    delta = _delta_measure(geom, g, x, res.point, xstar) if xstar is not None else None
    return IterationRecord(
        k=k,
        step_kind=OBJECTIVE,
        i=0,
        h=h,
        tau_or_gamma=schedule.tau(k),
        lam=res.lam,
        x_next=res.point,
        f0=v,
        max_fi=max_fi,
        F=math.nan,
        breg_step=res.breg,
        delta=delta,
    )


def f0_value(problem, x):
    return as_max_type(problem.objective).value(x)


def run_switching_I(
    problem: ProblemInstance,
    schedule: StepSchedule,
    num_steps: int,
    exhaustive: bool = False,
    checkpoint_doubling: bool = False,
) -> RunResult:
    """Switching method with Bregman projections onto linearized constraints."""
    return _switching_run(problem, schedule, num_steps, "switch1", _select_switch_1, exhaustive, checkpoint_doubling)


def run_switching_II(
    problem: ProblemInstance,
    schedule: StepSchedule,
    num_steps: int,
    exhaustive: bool = False,
    checkpoint_doubling: bool = False,
) -> RunResult:
    """Switching method driving both step kinds through the step equation."""
    return _switching_run(problem, schedule, num_steps, "switch2", _select_switch_2, exhaustive, checkpoint_doubling)


def run_unbounded(
    problem: ProblemInstance,
    gamma: GammaSchedule,
    D0: float,
    eps: float,
    num_steps: int,
) -> RunResult:
    """Switching method for unbounded feasible sets.

    Trial points slide from x_0 toward x_k with weights gamma_k/gamma_{k+1};
    constraint steps fire on eps-violations at the trial point, and every
    step solves phi(a/gamma_{k+1}) = (1 - gamma_k/gamma_{k+1}) D0.  The
    aggregation weights a_k approximate optimal Lagrange multipliers through
    their per-index sums.
    """
    if not (D0 > 0 and eps > 0):
        raise ValueError("run_unbounded needs positive D0 and eps")
    geom, Q = problem.geom, problem.Q
    f0 = problem.objective
    m = problem.m
    result = RunResult(method="unbounded", problem=problem.name, x0=problem.x0.copy())
    result.meta = {"num_steps": num_steps, "D0": D0, "eps": eps, "gamma": gamma.kind}
    records = []
    x0 = problem.x0.copy()
    x = x0.copy()
    for k in range(num_steps):
        gk, gk1 = gamma.gamma(k), gamma.gamma(k + 1)
        tau = gk / gk1
        y = (1.0 - tau) * x0 + tau * x
        vals = problem.constraint_values(y) if m else np.zeros(0)
        i_k = 0
        for idx in range(m):
            if vals[idx] >= eps:
                i_k = idx + 1
                break
        oracle = problem.constraints[i_k - 1] if i_k else f0
        v, g = oracle.eval(y)
        target = (1.0 - tau) * D0
        try:
            res = solve_phi_equation(geom, Q, y, g, target)
        except ZeroSubgradientError:
            if i_k:
                raise InfeasibleProblemError(
                    f"constraint {i_k} is violated at the trial point with a zero subgradient"
                ) from None
            result.termination = DIRECTIONALLY_OPTIMAL
            break
        except DirectionallyOptimal:
            result.termination = DIRECTIONALLY_OPTIMAL
            break
        a_k = res.lam * gk1
        records.append(
            IterationRecord(
                k=k,
                step_kind=CONSTRAINT if i_k else OBJECTIVE,
                i=i_k,
                h=math.nan,
                tau_or_gamma=gk1,
                lam=a_k,
                x_next=res.point,
                f0=f0_value(problem, y),
                max_fi=float(np.max(vals)) if m else math.nan,
                F=math.nan,
                breg_step=res.breg,
                y=y,
            )
        )
        x = res.point
    result.window = (0, len(records))
    result.estimate = _window_estimate(records, (0, num_steps), m)
    if records:
        result.meta["sigma_N"] = gamma.sigma(len(records))
    pool = ((rec.k, rec.f0, rec.y) for rec in records if rec.i == 0)
    return _finish(result, records, problem, pool)


def run_classical_known_opt(problem: ProblemInstance, num_steps: int, fstar: float | None = None) -> RunResult:
    """Classical known-optimum comparator:

        x_{k+1} = Proj_Q [ x_k - (F(x_k) - F*) / ||g||_*^2 * B^{-1} g ].

    Kept as the baseline the known-optimum rule is measured against.
    """
    geom = problem.geom
    from .proxmaps import _composite_domain  # effective domain shared with composite steps

    dom, rows = _composite_domain(problem)
    if fstar is None:
        if problem.truth is None or problem.truth.Fstar is None:
            raise ValueError("classical known-optimum run needs F*; none declared on the instance")
        fstar = problem.truth.Fstar
    result = RunResult(method="classical", problem=problem.name, x0=problem.x0.copy())
    result.meta = {"num_steps": num_steps, "fstar": fstar}
    records = []
    x = problem.x0.copy()
    fmax = as_max_type(problem.objective)
    for k in range(num_steps):
        v, g = fmax.eval(x)
        Fx = v + problem.psi.value(x)
        gap = Fx - fstar
        gnorm2 = geom.metric.inv_quad(g)
        if gnorm2 == 0.0:
            raise ZeroSubgradientError("classical rule hit a zero subgradient")
        step = max(gap, 0.0) / gnorm2
        u = x - step * geom.metric.inv_apply(g)
        T, _ = bregman_project(geom, dom, u, rows)
        records.append(
            IterationRecord(
                k=k,
                step_kind=OBJECTIVE,
                i=0,
                h=math.nan,
                tau_or_gamma=math.nan,
                lam=step,
                x_next=T,
                f0=v,
                max_fi=_constraint_values(problem, x)[0],
                F=Fx,
                breg_step=geom.bregman(x, T),
            )
        )
        x = T
    pool = ((rec.k, rec.F, (problem.x0 if rec.k == 0 else records[rec.k - 1].x_next)) for rec in records)
    return _finish(result, records, problem, pool)

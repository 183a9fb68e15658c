import math

import numpy as np

from sgm import dualcert, solvers
from sgm.geometry import ProxGeometry, SetDescriptor
from sgm.oracles import (
    LinearOracle,
    NormDistOracle,
    ProblemInstance,
    Truth,
    gallery,
)
from sgm.schedules import GammaSchedule, StepSchedule

E2 = ProxGeometry.euclidean(2)


def bounded_schedule(inst):
    return StepSchedule.inverse_sqrt(scale=math.sqrt(2.0 * inst.truth.D))


def test_basic_matches_classical_normalized_subgradient():
    # On the whole space the step equation reduces to x - h g / ||g||.
    z = np.array([0.7, -0.4])
    inst = ProblemInstance(
        name="norm-free",
        geom=E2,
        Q=SetDescriptor.whole_space(2),
        objective=NormDistOracle(z),
        x0=np.array([2.0, 1.0]),
        truth=Truth(xstar=z, f0star=0.0),
    )
    sched = StepSchedule.constant_for_horizon(30, scale=1.3)
    run = solvers.run_basic(inst, sched, 31)
    x = inst.x0.copy()
    for k in range(31):
        v, g = inst.objective.eval(x)
        ref = x - sched.h(k) * g / np.linalg.norm(g)
        assert np.linalg.norm(run.records[k].x_next - ref) <= 1e-10
        x = ref


def test_basic_telescoped_delta_bound():
    # sum h_k delta_k <= beta(x0, x*) + sum h_k^2 / 2
    for name in ("norm-box", "quasi-ratio-box"):
        inst = gallery(name)
        R0 = inst.geom.norm(inst.x0 - inst.truth.xstar)
        N = 200
        sched = StepSchedule.constant_for_horizon(N, scale=max(R0, 1e-6))
        run = solvers.run_basic(inst, sched, N + 1)
        lhs = sum(r.h * r.delta for r in run.records if r.delta is not None)
        rhs = inst.geom.bregman(inst.x0, inst.truth.xstar) + 0.5 * sum(r.h ** 2 for r in run.records)
        assert lhs <= rhs + 1e-6


def test_basic_directionally_optimal_termination():
    # start at the constrained minimizer of a linear objective over a box
    Q = SetDescriptor.box([-1, -1], [1, 1])
    inst = ProblemInstance(
        name="lin-box",
        geom=E2,
        Q=Q,
        objective=LinearOracle([1.0, 0.5]),
        x0=np.array([-1.0, -1.0]),
    )
    run = solvers.run_basic(inst, StepSchedule.constant_for_horizon(9, scale=1.0), 10)
    assert run.termination == solvers.DIRECTIONALLY_OPTIMAL
    assert len(run.records) == 0


def test_composite_per_step_invariants():
    # eq-DecStep and eq-NewF at every iteration
    for seed in (0, 1):
        inst = gallery("sc-quadratic", seed=seed, n=5, mu=1.0, lf=8.0)
        run = solvers.run_composite_known_opt(inst, 60)
        xs = run.iterates()
        xstar = inst.truth.xstar
        comp = inst.objective.components[0]
        for k, rec in enumerate(run.records):
            lhs = inst.geom.bregman(rec.x_next, xstar)
            rhs = inst.geom.bregman(xs[k], xstar) - inst.geom.bregman(xs[k], rec.x_next)
            assert lhs <= rhs + 1e-9
            v, g = comp.eval(xs[k])
            ell = v + g @ (rec.x_next - xs[k])
            assert ell <= inst.truth.Fstar + 1e-9
        # rho_k bound implied by the telescoped decrease
        r0 = inst.geom.bregman(inst.x0, xstar)
        disp = [inst.geom.norm(xs[k] - xs[k + 1]) for k in range(len(run.records))]
        for k in range(len(disp)):
            assert min(disp[: k + 1]) <= math.sqrt(2.0 * r0 / (k + 1)) + 1e-9


def test_composite_constant_at_optimum():
    inst = gallery("sc-quadratic", seed=2, n=4, mu=1.0, lf=6.0)
    inst.x0 = inst.truth.xstar.copy()
    run = solvers.run_composite_known_opt(inst, 10)
    for rec in run.records:
        assert rec.lam == 0.0
        assert np.array_equal(rec.x_next, inst.truth.xstar)


def test_double_step_branches_and_rate():
    inst = gallery("semi-smooth-box")
    run = solvers.run_double_step(inst, bounded_schedule(inst), 128)
    kinds = {r.step_kind for r in run.records}
    assert kinds <= {solvers.DOUBLE_2A, solvers.DOUBLE_2B}
    # feasible points pass through step 1 unchanged
    xs = run.iterates()
    for k, rec in enumerate(run.records):
        if inst.constraint_value(xs[k]) <= 0:
            assert np.array_equal(rec.y, xs[k])
    # value rate through the growth function: min f0(y_k) <= f0* + mu(h_k(N))
    kN, _ = run.window
    h_kN = run.meta["h_kN"]
    best = min(r.f0 for r in run.records if r.step_kind == solvers.DOUBLE_2B and r.k >= kN)
    assert best <= inst.truth.f0star + inst.truth.mu(h_kN) + 1e-9


def test_switching_all_feasible_is_objective_only():
    Q = SetDescriptor.box([-1, -1], [1, 1])
    inst = ProblemInstance(
        name="easy",
        geom=E2,
        Q=Q,
        objective=NormDistOracle([0.2, -0.3]),  # interior minimizer, never stalls
        constraints=[LinearOracle([0.1, 0.1], -10.0)],  # never violated
        x0=np.array([0.5, 0.5]),
        truth=Truth(D=1.1 * 8.0, M0=1.0, M=np.array([np.hypot(0.1, 0.1)])),
    )
    for runner in (solvers.run_switching_I, solvers.run_switching_II):
        run = runner(inst, bounded_schedule(inst), 40)
        assert all(r.i == 0 for r in run.records)
        assert len(run.records) == 40
        assert run.estimate.sigma[0] > 0
        assert np.all(run.estimate.sigma[1:] == 0.0)
        assert np.all(run.estimate.lambdas == 0.0)


def test_multiplier_ratio_definition():
    recs = [
        solvers.IterationRecord(k=0, step_kind="objective", i=0, h=1, tau_or_gamma=1, lam=2.0,
                                x_next=np.zeros(2), f0=0, max_fi=0, F=0, breg_step=0),
        solvers.IterationRecord(k=1, step_kind="constraint", i=1, h=1, tau_or_gamma=1, lam=1.0,
                                x_next=np.zeros(2), f0=0, max_fi=0, F=0, breg_step=0),
    ]
    est = solvers._window_estimate(recs, (0, 2), 1)
    assert est.sigma[0] == 2.0 and est.sigma[1] == 1.0
    assert est.lambdas[0] == 0.5


def test_switch2_lambda_norm_lower_bound():
    # lam_{i,k} ||f_i'(x_k)||_* >= h_k whenever the step equation is solved
    inst = gallery("linquad-box")
    run = solvers.run_switching_II(inst, bounded_schedule(inst), 120)
    xs = run.iterates()
    f_all = [inst.objective] + list(inst.constraints)
    for rec in run.records:
        if rec.i < 0:
            continue
        _, g = f_all[rec.i].eval(xs[rec.k])
        assert rec.lam * inst.geom.dual_norm(g) >= rec.h - 1e-9
    # spot value: ||g|| = 5, h = 1 on the whole space gives lam = 0.2
    from sgm.proxmaps import solve_phi_equation
    res = solve_phi_equation(E2, SetDescriptor.whole_space(2), np.zeros(2), np.array([3.0, 4.0]), 0.5)
    assert res.lam >= 0.2 - 1e-15


def test_switching_window_feasibility_and_certificate_exact_dual():
    # th-Main2/th-Main3 displays at 1e-6 with an exact dual oracle
    inst = gallery("twolin-box")
    for runner in (solvers.run_switching_I, solvers.run_switching_II):
        run = runner(inst, bounded_schedule(inst), 256)
        est = run.estimate
        assert est.sigma[0] > 0
        cert = dualcert.gap_certificate(run, inst)
        assert cert.dual_mode == "exact"
        assert cert.weighted_primal - cert.dual_value <= cert.bound + 1e-6
        assert cert.primal_best - cert.dual_value <= cert.bound + 1e-6
        xs = run.iterates()
        kN, _ = run.window
        for rec in run.records:
            if rec.i == 0 and rec.k >= kN:
                vals = inst.constraint_values(xs[rec.k])
                assert np.max(vals / inst.truth.M) <= run.meta["h_kN"] + 1e-9


def test_switching_selection_predicate():
    # constraint-step records carry the projection sizes that triggered them
    inst = gallery("linquad-box")
    run = solvers.run_switching_I(inst, bounded_schedule(inst), 120, exhaustive=True)
    for rec in run.records:
        if rec.step_kind == solvers.CONSTRAINT:
            assert rec.r_all[rec.i - 1] >= 0.5 * rec.h ** 2
        elif rec.step_kind == solvers.OBJECTIVE:
            assert np.all(np.nan_to_num(rec.r_all, nan=0.0) < 0.5 * rec.h ** 2)


def test_switching_checkpoint_mode():
    inst = gallery("twolin-box")
    run = solvers.run_switching_I(inst, bounded_schedule(inst), 256, checkpoint_doubling=True)
    assert run.checkpoints
    for P, est in run.checkpoints.items():
        ref = solvers._window_estimate(run.records, est.window, inst.m)
        assert np.allclose(ref.sigma, est.sigma, atol=0, rtol=0)


def test_switching_stall_handling():
    # noslater-ball transiently deadlocks at the relaxation optimum (0, -1)
    inst = gallery("noslater-ball")
    run = solvers.run_switching_I(inst, bounded_schedule(inst), 64)
    assert run.termination == solvers.COMPLETED
    stalls = [r for r in run.records if r.step_kind == solvers.STALLED]
    assert stalls, "expected transient stall steps on this instance"
    assert all(r.k < run.window[0] for r in stalls)
    assert len(run.records) == 64


def test_unbounded_first_step_and_weights():
    inst = gallery("slater-unbounded")
    run = solvers.run_unbounded(inst, GammaSchedule.sqrt(), 1.0, 0.05, 5)
    rec0 = run.records[0]
    assert np.array_equal(rec0.y, inst.x0)  # tau_0 = 0
    # a_0 = sqrt(2 gamma_1 (gamma_1 - gamma_0) D0) / ||g|| with gamma = sqrt(k)
    i0 = rec0.i
    oracle = inst.constraints[i0 - 1] if i0 else inst.objective
    g = oracle.eval(inst.x0)[1]
    expect = math.sqrt(2.0 * 1.0) / inst.geom.dual_norm(g)
    assert abs(rec0.lam - expect) < 1e-12


def test_unbounded_matches_direct_recursion():
    # independent implementation of the whole-space specialization
    inst = gallery("slater-unbounded")
    D0, eps, N = 1.0, 0.05, 300
    run = solvers.run_unbounded(inst, GammaSchedule.sqrt(), D0, eps, N)
    x0 = inst.x0.copy()
    x = x0.copy()
    for k in range(N):
        tau = math.sqrt(k / (k + 1.0))
        y = (1.0 - tau) * x0 + tau * x
        i_k = 0
        for idx, ci in enumerate(inst.constraints):
            if ci.value(y) >= eps:
                i_k = idx + 1
                break
        oracle = inst.constraints[i_k - 1] if i_k else inst.objective
        g = oracle.eval(y)[1]
        lam = math.sqrt(2.0 * (1.0 - tau) * D0) / np.linalg.norm(g)
        x = y - lam * g
        assert np.linalg.norm(run.records[k].x_next - x) <= 1e-10


def test_unbounded_weighted_telescoping():
    # gamma_N beta(x_N, x) + sum a_k <g_k, y_k - x> <= gamma_N (beta(x0, x) + D0)
    inst = gallery("slater-unbounded")
    D0, eps, N = 1.0, 0.05, 400
    run = solvers.run_unbounded(inst, GammaSchedule.sqrt(), D0, eps, N)
    gamma_N = math.sqrt(N)
    f_all = [inst.objective] + list(inst.constraints)
    rng = np.random.default_rng(51)
    inner = np.zeros(10)
    probes = rng.uniform(-2.0, 2.0, (10, 2))
    for rec in run.records:
        g = f_all[rec.i].eval(rec.y)[1]
        inner += rec.lam * (probes @ g - g @ rec.y) * -1.0
    xN = run.x_final
    for j, x in enumerate(probes):
        lhs = gamma_N * inst.geom.bregman(xN, x) + inner[j]
        rhs = gamma_N * (inst.geom.bregman(inst.x0, x) + D0)
        assert lhs <= rhs + 1e-6


def test_unbounded_eps_feasibility_of_objective_trials():
    inst = gallery("slater-unbounded")
    run = solvers.run_unbounded(inst, GammaSchedule.sqrt(), 1.0, 0.05, 500)
    for rec in run.records:
        if rec.i == 0:
            assert np.all(inst.constraint_values(rec.y) <= 0.05)


def test_determinism_bit_identical():
    inst1 = gallery("linquad-box")
    inst2 = gallery("linquad-box")
    r1 = solvers.run_switching_II(inst1, bounded_schedule(inst1), 80)
    r2 = solvers.run_switching_II(inst2, bounded_schedule(inst2), 80)
    for a, b in zip(r1.records, r2.records):
        assert a.lam == b.lam and a.i == b.i
        assert np.array_equal(a.x_next, b.x_next)
    assert r1.best_f0 == r2.best_f0


def test_classical_comparator_step():
    inst = gallery("optstep-halfspace")
    run = solvers.run_classical_known_opt(inst, 1)
    assert np.allclose(run.records[0].x_next, [0.75, 0.0], atol=1e-15)


def test_trace_length_contract():
    inst = gallery("twolin-box")
    run = solvers.run_switching_I(inst, bounded_schedule(inst), 33)
    assert len(run.records) == 33


def test_basic_on_entropy_simplex():
    geom = ProxGeometry.entropy(3)
    Q = SetDescriptor.simplex(3)
    c = np.array([0.5, 0.1, 0.9])
    inst = ProblemInstance(
        name="simplex-lin",
        geom=geom,
        Q=Q,
        objective=LinearOracle(c),
        x0=np.full(3, 1.0 / 3.0),
        truth=Truth(xstar=np.array([0.0, 1.0, 0.0]), f0star=0.1),
    )
    sched = StepSchedule.constant_for_horizon(100, scale=1.0)
    run = solvers.run_basic(inst, sched, 101)
    assert min(r.f0 for r in run.records) <= 0.1 + 0.15
    lhs = sum(r.h * r.delta for r in run.records if r.delta is not None)
    rhs = geom.bregman(inst.x0, inst.truth.xstar) + 0.5 * sum(r.h ** 2 for r in run.records)
    assert lhs <= rhs + 1e-6

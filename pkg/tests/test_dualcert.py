import math

import numpy as np
import pytest

from sgm import dualcert, solvers
from sgm.errors import CertificateUnavailableError
from sgm.geometry import ProxGeometry, SetDescriptor
from sgm.oracles import LinearOracle, ProblemInstance, Truth, gallery
from sgm.schedules import StepSchedule

E2 = ProxGeometry.euclidean(2)


def test_noslater_dual_closed_form():
    inst = gallery("noslater-ball")
    dv = dualcert.dual_value(inst, [1.0])
    assert abs(dv.value - (1.0 - math.sqrt(2.0))) < 1e-12
    assert dv.tolerance == 0.0 and dv.mode == "exact"
    # lam = 0 reduces to the objective minimum over Q
    dv0 = dualcert.dual_value(inst, [0.0])
    assert abs(dv0.value - (-1.0)) < 1e-12
    val, lam, attained = dualcert.dual_supremum_scan(inst)
    assert not attained
    assert val >= -1e-3


def test_grid_dual_matches_analytic_value():
    inst = gallery("linquad-box")
    dv = dualcert.dual_value(inst, [1.0])
    # min over the box of <c,x> + (||x||^2 - 1)/2 is attained at -c, value -1
    assert dv.mode == "grid"
    assert -1.0 <= dv.value <= -1.0 + dv.tolerance + 1e-12


def test_weak_duality_sampled():
    rng = np.random.default_rng(3)
    inst = gallery("linquad-box")
    feas = []
    while len(feas) < 30:
        x = rng.uniform(-1.0, 1.0, 2)
        if all(c.value(x) <= 0 for c in inst.constraints):
            feas.append(x)
    for lam in ([0.0], [0.5], [1.0], [3.0]):
        dv = dualcert.dual_value(inst, lam)
        for x in feas:
            assert dv.value <= inst.objective.value(x) + dv.tolerance + 1e-6


def test_restricted_dual_dominates():
    inst = gallery("noslater-ball")
    for lam in (0.0, 0.7, 2.0):
        full = dualcert.dual_value(inst, [lam])
        restricted = dualcert.dual_value(inst, [lam], restriction_D=1.0)
        assert restricted.value >= full.value - full.tolerance - restricted.tolerance - 1e-9


def test_lower_bound_chain_with_known_multipliers():
    # f0(x_k) >= f0* - <lam*, M> max_i f_i(x_k)/M_i - tol along switching traces
    inst = gallery("twolin-box")
    sched = StepSchedule.inverse_sqrt(scale=math.sqrt(2 * inst.truth.D))
    run = solvers.run_switching_II(inst, sched, 200)
    xs = run.iterates()
    lam_star, M = inst.truth.lambda_star, inst.truth.M
    for rec in run.records:
        if rec.i < 0:
            continue
        x = xs[rec.k]
        worst = np.max(inst.constraint_values(x) / M)
        assert rec.f0 >= inst.truth.f0star - float(lam_star @ M) * worst - 1e-9


def test_gap_certificate_feasible_only_trace():
    from sgm.oracles import NormDistOracle

    Q = SetDescriptor.box([-1, -1], [1, 1])
    inst = ProblemInstance(
        name="easy",
        geom=E2,
        Q=Q,
        objective=NormDistOracle([0.2, -0.3]),
        constraints=[LinearOracle([0.0, 0.1], -5.0)],
        x0=np.array([0.5, 0.5]),
        truth=Truth(D=1.1 * 8.0, M0=1.0, M=np.array([0.1]), f0star=0.0),
    )
    sched = StepSchedule.inverse_sqrt(scale=math.sqrt(2 * inst.truth.D))
    run = solvers.run_switching_I(inst, sched, 80)
    assert all(r.i == 0 for r in run.records)
    cert = dualcert.gap_certificate(run, inst)
    assert np.all(cert.lambdas == 0.0)
    # with lam = 0 the dual value is min_Q f0 = 0 at the interior center
    assert abs(cert.dual_value) <= cert.dual_tolerance + 1e-12
    assert cert.bound_holds


def test_gap_certificate_unavailable():
    run = solvers.RunResult(method="switch1", problem="stub", x0=np.zeros(2))
    run.estimate = dualcert.MultiplierEstimate(window=(0, 1), sigma=np.array([0.0, 1.0]), lambdas=None)
    with pytest.raises(CertificateUnavailableError):
        dualcert.gap_certificate(run, gallery("noslater-ball"))


def test_slater_bound_values():
    inst = gallery("linquad-box")
    # strictly feasible center: f1(0) = -1/2, M1 = 2 sqrt(2), f0 gap = 0 - (-1) = 1
    bound = dualcert.slater_bound(inst, np.zeros(2))
    expect = (0.0 - inst.truth.f0star) * inst.truth.M[0] / 0.5
    assert abs(bound - expect) < 1e-12
    # a Slater point with optimal value gives bound zero
    inst2 = gallery("linquad-box")
    inst2.truth.f0star = float(inst2.objective.value(np.zeros(2)))
    assert dualcert.slater_bound(inst2, np.zeros(2)) == 0.0
    # direct formula: m=1, M=1, f1(xhat) = -1/2, gap 2 -> 4
    Q = SetDescriptor.box([-3, -3], [3, 3])
    synth = ProblemInstance(
        name="synth",
        geom=E2,
        Q=Q,
        objective=LinearOracle([1.0, 0.0]),
        constraints=[LinearOracle([1.0, 0.0], -0.5)],  # f1(0) = -1/2, M1 = 1
        x0=np.zeros(2),
        truth=Truth(f0star=-2.0, M=np.array([1.0])),
    )
    assert abs(dualcert.slater_bound(synth, np.zeros(2)) - 4.0) < 1e-12


def test_slater_bound_requires_strict_feasibility():
    inst = gallery("noslater-ball")
    inst.truth.f0star = 0.0
    for x in ([1.0, 0.0], [0.5, 0.0], [0.0, 0.0]):
        with pytest.raises(ValueError):
            dualcert.slater_bound(inst, x)


def test_unbounded_certificate_bound():
    from sgm.schedules import GammaSchedule

    inst = gallery("slater-unbounded")
    run = solvers.run_unbounded(inst, GammaSchedule.sqrt(), inst.truth.D0, 0.05, 6000)
    cert = dualcert.gap_certificate(run, inst)
    assert cert.bound == 0.05
    assert cert.bound_holds
    assert cert.gap <= 0.05 + cert.dual_tolerance

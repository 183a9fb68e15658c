import math

import numpy as np
import pytest

from sgm.errors import HorizonTooShortError, ScheduleError
from sgm.schedules import GammaSchedule, StepSchedule, divergence_delay, window_start


def test_divergence_delay_examples():
    const4 = StepSchedule.constant_for_horizon(4)
    for k in range(10):
        assert divergence_delay(const4, k) == 4
    inv = StepSchedule.inverse_sqrt()
    assert divergence_delay(inv, 0) == 0  # tau_0^2 = 2
    assert divergence_delay(inv, 2) == 1  # 2/3 < 1, 2/3 + 1/2 >= 1


def test_window_start_examples():
    const4 = StepSchedule.constant_for_horizon(4)
    assert window_start(const4, 5) == 0
    inv = StepSchedule.inverse_sqrt()
    assert window_start(inv, 20) >= 10
    assert window_start(inv, 2) == 1
    with pytest.raises(HorizonTooShortError):
        window_start(const4, 4)


def test_delay_monotone_and_bounded():
    inv = StepSchedule.inverse_sqrt()
    prev = -1
    for k in range(0, 10_001, 1):
        a = inv.divergence_delay(k)
        assert a >= prev
        if k >= 1:
            assert a <= k - 1 or k == 1 and a == 0
        prev = a
    const = StepSchedule.constant_for_horizon(7)
    assert all(const.divergence_delay(k) == 7 for k in range(100))


def test_step_scaling():
    D = 3.5
    sched = StepSchedule.bounded_set("inverse-sqrt", D)
    assert abs(sched.h(0) - math.sqrt(2 * D) * math.sqrt(2.0)) < 1e-15
    basic = StepSchedule.constant_for_horizon(99, scale=2.0)
    assert abs(basic.h(5) - 2.0 / 10.0) < 1e-15


def test_user_list_validation():
    with pytest.raises(ScheduleError):
        StepSchedule.from_list([1.0, 1.2])  # increasing
    with pytest.raises(ScheduleError):
        StepSchedule.from_list([1.0, 0.0])  # not positive
    s = StepSchedule.from_list([1.5, 1.0, 0.5])
    assert s.tau(2) == 0.5
    with pytest.raises(ScheduleError):
        s.tau(3)  # beyond the declared horizon
    with pytest.raises(ScheduleError):
        StepSchedule.from_list([0.1, 0.1]).divergence_delay(0)  # never reaches 1


def test_gamma_schedule():
    g = GammaSchedule.sqrt()
    assert g.gamma(0) == 0.0 and g.gamma(4) == 2.0
    ks = np.arange(0, 10_000)
    g1 = np.sqrt(ks + 1.0)
    g0 = np.sqrt(ks.astype(float))
    prod = g1 * (g1 - g0)
    assert np.all(prod >= 0.5 - 1e-12)
    # Sigma_N >= sqrt(N/2) for all N <= 1e4
    terms = np.sqrt(prod)
    sig = np.cumsum(terms) / g1
    assert np.all(sig >= np.sqrt((ks + 1.0) / 2.0))
    with pytest.raises(ScheduleError):
        GammaSchedule.from_list([0.0, 0.0, 1.0])
    gl = GammaSchedule.from_list([0.0, 1.0, 3.0])
    assert gl.gamma(2) == 3.0
    with pytest.raises(ScheduleError):
        gl.gamma(3)


def test_gamma_sigma_matches_definition():
    g = GammaSchedule.sqrt()
    N = 50
    manual = sum(math.sqrt(g.gamma(k + 1) * (g.gamma(k + 1) - g.gamma(k))) for k in range(N)) / g.gamma(N)
    assert abs(g.sigma(N) - manual) < 1e-12

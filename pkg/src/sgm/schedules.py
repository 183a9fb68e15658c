"""Step-size and scaling sequences.

A :class:`StepSchedule` is a nonincreasing positive sequence of scaling
coefficients tau_k whose squares have divergent partial sums (the
second-order divergence condition), together with a multiplier so that the
primal step bounds are h_k = scale * tau_k.  The divergence delay a(k) is the
shortest window length from k whose tau^2 partial sum reaches one; the window
start k(N) is the largest k with k + a(k) <= N - 1.

A :class:`GammaSchedule` is the strictly increasing scaling sequence of the
unbounded-set method.

Schedules are immutable after construction; prefix sums are precomputed on
demand from a single thread-free growth routine (callers are expected to
treat instances as read-only once shared).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import HorizonTooShortError, ScheduleError

CONSTANT = "constant"
INVERSE_SQRT = "inverse-sqrt"
USER_LIST = "list"


class StepSchedule:
    """Primal step bounds h_k = scale * tau_k with second-order divergence."""

    def __init__(self, kind: str, scale: float = 1.0, horizon: int | None = None, taus=None):
        if scale <= 0:
            raise ScheduleError("schedule scale must be positive")
        self.kind = kind
        self.scale = float(scale)
        if kind == CONSTANT:
            if horizon is None or horizon < 0:
                raise ScheduleError("constant schedule needs a horizon N >= 0")
            self.horizon = int(horizon)
            self._const = 1.0 / math.sqrt(self.horizon + 1)
        elif kind == INVERSE_SQRT:
            self.horizon = None
        elif kind == USER_LIST:
            t = np.asarray(taus, dtype=float)
            if t.ndim != 1 or t.size == 0:
                raise ScheduleError("user schedule needs a nonempty list of coefficients")
            if np.any(t <= 0) or np.any(np.diff(t) > 0):
                raise ScheduleError("user schedule must be positive and nonincreasing")
            # Divergence of the squared sums cannot be checked on finite data;
            # the list carries a declared horizon and is rejected beyond it.
            self.horizon = t.size
            self._taus = t
        else:
            raise ScheduleError(f"unknown schedule kind {kind!r}")
        self._prefix = [0.0]  # prefix[j] = sum_{i<j} tau_i^2

    @staticmethod
    def constant_for_horizon(N: int, scale: float = 1.0) -> "StepSchedule":
        """tau_k = 1/sqrt(N+1); with scale R0 this gives h = R0/sqrt(N+1)."""
        return StepSchedule(CONSTANT, scale=scale, horizon=N)

    @staticmethod
    def inverse_sqrt(scale: float = 1.0) -> "StepSchedule":
        """tau_k = sqrt(2/(k+1))."""
        return StepSchedule(INVERSE_SQRT, scale=scale)

    @staticmethod
    def from_list(taus, scale: float = 1.0) -> "StepSchedule":
        return StepSchedule(USER_LIST, scale=scale, taus=taus)

    @staticmethod
    def bounded_set(kind: str, D: float) -> "StepSchedule":
        """Schedule with the canonical scale sqrt(2 D) for a bounded set."""
        if not D > 0:
            raise ScheduleError("D must be positive")
        scale = math.sqrt(2.0 * D)
        if kind == CONSTANT:
            raise ScheduleError("constant bounded-set schedule also needs a horizon")
        return StepSchedule(kind, scale=scale)

    def tau(self, k: int) -> float:
        if k < 0:
            raise ScheduleError("schedule index must be nonnegative")
        if self.kind == CONSTANT:
            return self._const
        if self.kind == INVERSE_SQRT:
            return math.sqrt(2.0 / (k + 1))
        if k >= self.horizon:
            raise ScheduleError(f"user schedule queried at k={k} beyond declared horizon {self.horizon}")
        return float(self._taus[k])

    def h(self, k: int) -> float:
        return self.scale * self.tau(k)

    def _tau2_prefix(self, j: int) -> float:
        """sum_{i<j} tau_i^2, memoized."""
        while len(self._prefix) <= j:
            i = len(self._prefix) - 1
            self._prefix.append(self._prefix[-1] + self.tau(i) ** 2)
        return self._prefix[j]

    def divergence_delay(self, k: int) -> int:
        """Minimal a >= 0 with sum_{i=k}^{k+a} tau_i^2 >= 1."""
        if self.kind == CONSTANT:
            return self.horizon  # (a+1)/(N+1) >= 1 first at a = N
        base = self._tau2_prefix(k)
        a = 0
        while self._tau2_prefix(k + a + 1) - base < 1.0:
            a += 1
            if self.kind == USER_LIST and k + a >= self.horizon:
                raise ScheduleError(
                    "user schedule exhausted before reaching unit squared sum; declare a longer list"
                )
        return a

    def window_start(self, N: int) -> int:
        """max{k >= 0 : k + a(k) <= N - 1}; requires N >= 1 + a(0)."""
        if N < 1 + self.divergence_delay(0):
            raise HorizonTooShortError(f"N={N} is below 1 + a(0) = {1 + self.divergence_delay(0)}")
        # k + a(k) is nondecreasing, so scan forward to the last admissible k.
        k = 0
        while k + 1 + self.divergence_delay(k + 1) <= N - 1:
            k += 1
        return k


class GammaSchedule:
    """Strictly increasing scaling coefficients gamma_k >= 0."""

    SQRT = "sqrt"

    def __init__(self, kind: str = SQRT, values=None):
        self.kind = kind
        if kind == self.SQRT:
            self.values = None
        elif kind == USER_LIST:
            v = np.asarray(values, dtype=float)
            if v.ndim != 1 or v.size < 2 or v[0] < 0 or np.any(np.diff(v) <= 0):
                raise ScheduleError("gamma list must be strictly increasing from gamma_0 >= 0")
            self.values = v
        else:
            raise ScheduleError(f"unknown gamma schedule kind {kind!r}")

    @staticmethod
    def sqrt() -> "GammaSchedule":
        return GammaSchedule(GammaSchedule.SQRT)

    @staticmethod
    def from_list(values) -> "GammaSchedule":
        return GammaSchedule(USER_LIST, values)

    def gamma(self, k: int) -> float:
        if k < 0:
            raise ScheduleError("gamma index must be nonnegative")
        if self.kind == self.SQRT:
            return math.sqrt(k)
        if k >= self.values.size:
            raise ScheduleError(f"gamma list queried at k={k} beyond declared horizon {self.values.size}")
        return float(self.values[k])

    def sigma(self, N: int) -> float:
        """(1/gamma_N) sum_{k<N} sqrt(gamma_{k+1} (gamma_{k+1} - gamma_k))."""
        if N < 1:
            raise ScheduleError("sigma requires N >= 1")
        gs = np.array([self.gamma(k) for k in range(N + 1)])
        terms = np.sqrt(gs[1:] * (gs[1:] - gs[:-1]))
        return float(np.sum(terms) / gs[N])


def divergence_delay(sched: StepSchedule, k: int) -> int:
    return sched.divergence_delay(k)


def window_start(sched: StepSchedule, N: int) -> int:
    return sched.window_start(N)

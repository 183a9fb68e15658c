"""Exception taxonomy shared across the library."""


class SgmError(Exception):
    """Base class for all library errors."""


class DomainError(SgmError):
    """A point lies outside the domain required by a geometry or set."""


class CapabilityError(SgmError):
    """Requested (geometry, set) combination has no exact subproblem solver."""


class ZeroSubgradientError(SgmError):
    """A step was requested with a zero subgradient."""


class DirectionallyOptimal(SgmError):
    """The step equation has no solution: the current point already minimizes
    the linearized model over the feasible set, so the control function is
    identically zero.  Solvers treat this as clean termination."""

    def __init__(self, point, message="current point minimizes the linear model over the set"):
        super().__init__(message)
        self.point = point


class UnboundedPhiError(SgmError):
    """Bracketing for the step equation failed to enclose the target after the
    doubling cap; indicates an anomalous control function."""


class InfeasibleLevelError(SgmError):
    """The level set of a known-optimum step is empty (the supplied optimal
    value is below the true optimum of the linearized model)."""


class InfeasibleProblemError(SgmError):
    """A linearized constraint has no feasible point over the set, certifying
    infeasibility of the underlying problem."""


class HorizonTooShortError(SgmError):
    """The requested iteration budget is below 1 + a(0) for the schedule."""


class ScheduleError(SgmError):
    """A user-supplied schedule violates its validity conditions."""


class GalleryLookupError(SgmError, KeyError):
    """Unknown gallery problem name."""


class CertificateUnavailableError(SgmError):
    """No objective-type steps fell in the analysis window, so multiplier
    ratios and the dual certificate are undefined."""


class ConfigError(SgmError):
    """Malformed run configuration or problem file; message names the key."""

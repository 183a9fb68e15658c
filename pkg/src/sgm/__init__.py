"""Primal subgradient methods with indirect dual step-size control.

A library and experiment harness for nonsmooth convex (and quasi-convex)
minimization over pluggable Bregman geometries: the basic step-equation
method, composite known-optimum stepping, double-step and switching schemes
for functionally constrained problems with on-the-fly Lagrange-multiplier
estimation, and a variant for unbounded feasible sets, together with
dual-side certificates for everything the methods claim.
"""

from .dualcert import DualCertificate, MultiplierEstimate, dual_value, gap_certificate, slater_bound
from .errors import (
    CapabilityError,
    CertificateUnavailableError,
    ConfigError,
    DirectionallyOptimal,
    DomainError,
    GalleryLookupError,
    HorizonTooShortError,
    InfeasibleLevelError,
    InfeasibleProblemError,
    ScheduleError,
    SgmError,
    UnboundedPhiError,
    ZeroSubgradientError,
)
from .geometry import (
    MetricOperator,
    ProxGeometry,
    SetDescriptor,
    bregman_distance,
    dual_norm,
    first_arg_convexity_check,
)
from .oracles import (
    CompositeTerm,
    LinearOracle,
    MaxTypeFunction,
    NormDistOracle,
    ProblemInstance,
    QuadraticOracle,
    RatioOracle,
    SubgradOracle,
    Truth,
    gallery,
    linearization,
    list_gallery,
)
from .proxmaps import (
    ProxStepResult,
    bregman_project,
    composite_prox_step,
    known_optimum_step,
    linearized_constraint_projection,
    phi_value_and_derivative,
    prox_step,
    solve_phi_equation,
)
from .schedules import GammaSchedule, StepSchedule, divergence_delay, window_start
from .solvers import (
    IterationRecord,
    RunResult,
    run_basic,
    run_classical_known_opt,
    run_composite_known_opt,
    run_double_step,
    run_switching_I,
    run_switching_II,
    run_unbounded,
)

__version__ = "0.1.0"

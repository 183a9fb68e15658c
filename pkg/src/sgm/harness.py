"""Run configuration, problem-file ingestion, trace/report emission, replay.

Traces are plain CSV with 17-significant-digit decimal text so that a stored
run replays bit-faithfully; summaries are JSON.  Output files are written
atomically (temp file + rename).  ``certify`` rebuilds the multiplier sums,
the best objective value, and the dual value from a stored trace and checks
them against the summary exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import dualcert, solvers
from .errors import (
    CapabilityError,
    ConfigError,
    GalleryLookupError,
    HorizonTooShortError,
    SgmError,
)
from .geometry import MetricOperator, ProxGeometry, SetDescriptor, validate_pair
from .oracles import (
    CompositeTerm,
    LinearOracle,
    MaxTypeFunction,
    NormDistOracle,
    ProblemInstance,
    QuadraticOracle,
    Truth,
    gallery,
)
from .schedules import GammaSchedule, StepSchedule

METHODS = ("basic", "composite", "double-step", "switch1", "switch2", "unbounded", "classical")

# Single versioned source for every tolerance the acceptance suite applies;
# echoed into each report so pass/fail lines are auditable.
TOLERANCES = {
    "version": 1,
    "linear_rate_per_step": 1e-9,
    "optstep_halving_abs": 1e-12,
    "classical_rate_band": (0.3, 3.0),
    "basic_delta_slack": 1e-9,
    "basic_value_slack": 1e-6,
    "averaged_rate_slack": 1e-9,
    "double_step_feasibility_slack": 1e-9,
    "switching_feasibility_slack": 1e-9,
    "switching_gap_slack": 2e-3,
    "unbounded_gap_slack": 2e-3,
    "prox_grid_agreement": 1e-4,
    "phi_equation_rel": 1e-10,
    "displacement_slack": 1e-12,
    "noslater_dual_abs": 1e-6,
    "noslater_sup_floor": -1e-3,
}

TRACE_BASE_COLUMNS = ["k", "step_kind", "i", "h", "tau_or_gamma", "lambda", "f0", "max_fi", "F", "breg_step"]


@dataclass
class RunConfig:
    """One experiment: problem source, method, schedule, and output paths."""

    problem: str  # "gallery:<name>" or a path to a problem JSON file
    method: str
    iters: int
    schedule: str = "inverse-sqrt"
    D: float | None = None
    D0: float | None = None
    eps: float | None = None
    R0: float | None = None
    fstar: float | None = None
    seed: int = 0
    out_dir: str | None = None
    gallery_params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "problem": self.problem,
            "method": self.method,
            "iters": self.iters,
            "schedule": self.schedule,
            "D": self.D,
            "D0": self.D0,
            "eps": self.eps,
            "R0": self.R0,
            "fstar": self.fstar,
            "seed": self.seed,
            "gallery_params": self.gallery_params,
        }

    @staticmethod
    def from_dict(d):
        known = {
            "problem", "method", "iters", "schedule", "D", "D0", "eps", "R0",
            "fstar", "seed", "gallery_params",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        return RunConfig(out_dir=None, **d)


# -- problem files ------------------------------------------------------------


def _require_keys(obj, allowed, path):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {path}.{sorted(unknown)[0]}")


def _parse_geometry(spec, dim, path="geometry"):
    _require_keys(spec, {"kind", "B"}, path)
    kind = spec.get("kind")
    if kind in ("euclidean", "euclidean-I"):
        B = spec.get("B")
        if B is None:
            return ProxGeometry.euclidean(dim)
        arr = np.asarray(B, dtype=float)
        metric = MetricOperator(diag=arr) if arr.ndim == 1 else MetricOperator(dense=arr)
        return ProxGeometry.euclidean(dim, metric)
    if kind == "entropy":
        if "B" in spec:
            raise ConfigError(f"{path}.B is not valid for the entropy geometry")
        return ProxGeometry.entropy(dim)
    raise ConfigError(f"{path}.kind must be euclidean or entropy, got {kind!r}")


def _parse_set(spec, dim, path="Q"):
    kind = spec.get("kind")
    if kind == "whole-space":
        _require_keys(spec, {"kind"}, path)
        return SetDescriptor.whole_space(dim)
    if kind == "box":
        _require_keys(spec, {"kind", "lower", "upper"}, path)
        return SetDescriptor.box(spec["lower"], spec["upper"])
    if kind == "ball":
        _require_keys(spec, {"kind", "center", "radius"}, path)
        return SetDescriptor.ball(spec["center"], spec["radius"])
    if kind == "halfspaces":
        _require_keys(spec, {"kind", "normals", "offsets"}, path)
        return SetDescriptor.halfspaces(spec["normals"], spec["offsets"])
    if kind == "simplex":
        _require_keys(spec, {"kind"}, path)
        return SetDescriptor.simplex(dim)
    raise ConfigError(f"{path}.kind is not a known set kind: {kind!r}")


_META_KEYS = {"lipschitz", "holder", "strong_convexity"}


def _parse_meta(spec):
    meta = {}
    if "lipschitz" in spec:
        meta["lipschitz"] = float(spec["lipschitz"])
    if "holder" in spec:
        L, nu = spec["holder"]
        meta["holder"] = (float(L), float(nu))
    if "strong_convexity" in spec:
        meta["strong_convexity"] = float(spec["strong_convexity"])
    return meta


def _parse_component(spec, dim, path):
    ctype = spec.get("type")
    meta = _parse_meta(spec)
    if ctype == "quadratic":
        _require_keys(spec, {"type", "matrix", "diag", "center", "offset"} | _META_KEYS, path)
        if ("matrix" in spec) == ("diag" in spec):
            raise ConfigError(f"{path} needs exactly one of matrix/diag")
        P = spec.get("matrix", spec.get("diag"))
        return QuadraticOracle(P, center=spec.get("center"), offset=spec.get("offset", 0.0), **meta)
    if ctype == "linear":
        _require_keys(spec, {"type", "a", "b"} | _META_KEYS, path)
        return LinearOracle(spec["a"], spec.get("b", 0.0), **meta)
    if ctype == "norm":
        _require_keys(spec, {"type", "center", "offset"} | _META_KEYS, path)
        return NormDistOracle(spec["center"], offset=spec.get("offset", 0.0), **meta)
    raise ConfigError(f"{path}.type must be quadratic, linear, or norm; got {ctype!r}")


def _parse_psi(spec, Q, dim, path="psi"):
    kind = spec.get("kind", "zero")
    if kind == "zero":
        _require_keys(spec, {"kind"}, path)
        return CompositeTerm.zero()
    if kind == "indicator":
        _require_keys(spec, {"kind", "set"}, path)
        S = _parse_set(spec["set"], dim, path + ".set") if "set" in spec else Q
        return CompositeTerm.indicator(S)
    if kind == "linear":
        _require_keys(spec, {"kind", "c"}, path)
        return CompositeTerm.linear(spec["c"])
    raise ConfigError(f"{path}.kind must be zero, indicator, or linear; got {kind!r}")


def _parse_truth(spec, path="truth"):
    allowed = {"xstar", "f0star", "Fstar", "M0", "M", "D", "D0", "lambda_star", "slater"}
    _require_keys(spec, allowed, path)
    arr = lambda key: None if spec.get(key) is None else np.asarray(spec[key], dtype=float)
    num = lambda key: None if spec.get(key) is None else float(spec[key])
    return Truth(
        xstar=arr("xstar"),
        f0star=num("f0star"),
        Fstar=num("Fstar"),
        M0=num("M0"),
        M=arr("M"),
        D=num("D"),
        D0=num("D0"),
        lambda_star=arr("lambda_star"),
        slater=arr("slater"),
    )


def _default_x0(Q):
    if Q.kind == SetDescriptor.WHOLE:
        return np.zeros(Q.dim)
    if Q.kind == SetDescriptor.BOX:
        return 0.5 * (Q.lower + Q.upper)
    if Q.kind == SetDescriptor.BALL:
        return Q.center.copy()
    if Q.kind == SetDescriptor.SIMPLEX:
        return np.full(Q.dim, 1.0 / Q.dim)
    raise ConfigError("x0 is required for halfspace feasible sets")


def load_problem(path: str) -> ProblemInstance:
    """Load and validate a problem-definition JSON file (schema in docs/format.md)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"problem file is not valid JSON: {exc}") from exc
    return problem_from_dict(data)


def problem_from_dict(data: dict) -> ProblemInstance:
    allowed = {"dimension", "geometry", "Q", "objective", "psi", "constraints", "x0", "truth", "name"}
    _require_keys(data, allowed, "<root>")
    for key in ("dimension", "geometry", "Q", "objective"):
        if key not in data:
            raise ConfigError(f"missing required key <root>.{key}")
    dim = int(data["dimension"])
    if dim < 1:
        raise ConfigError("<root>.dimension must be a positive integer")
    geom = _parse_geometry(data["geometry"], dim)
    Q = _parse_set(data["Q"], dim)
    if Q.dim != dim:
        raise ConfigError("<root>.Q dimension does not match <root>.dimension")
    obj_spec = data["objective"]
    _require_keys(obj_spec, {"components"}, "objective")
    comps = [
        _parse_component(c, dim, f"objective.components[{i}]")
        for i, c in enumerate(obj_spec.get("components", []))
    ]
    if not comps:
        raise ConfigError("objective.components must be nonempty")
    objective = MaxTypeFunction(comps) if len(comps) > 1 else comps[0]
    psi = _parse_psi(data.get("psi", {"kind": "zero"}), Q, dim)
    constraints = [
        _parse_component(c, dim, f"constraints[{i}]") for i, c in enumerate(data.get("constraints", []))
    ]
    truth = _parse_truth(data["truth"]) if "truth" in data else None
    x0 = np.asarray(data["x0"], dtype=float) if "x0" in data else _default_x0(Q)
    return ProblemInstance(
        name=data.get("name", "problem"),
        geom=geom,
        Q=Q,
        objective=objective,
        psi=psi,
        constraints=constraints,
        x0=x0,
        truth=truth,
    )


def resolve_problem(config: RunConfig) -> ProblemInstance:
    src = config.problem
    if src.startswith("gallery:"):
        src = src[len("gallery:"):]
        try:
            return gallery(src, seed=config.seed, **config.gallery_params)
        except GalleryLookupError as exc:
            raise ConfigError(str(exc)) from None
    if os.path.exists(src):
        return load_problem(src)
    try:
        return gallery(src, seed=config.seed, **config.gallery_params)
    except GalleryLookupError:
        raise ConfigError(f"problem source {src!r} is neither a file nor a gallery name") from None


# -- run dispatch -------------------------------------------------------------


def _build_schedule(config: RunConfig, problem: ProblemInstance) -> StepSchedule:
    if config.method == "basic":
        scale = config.R0
        if scale is None:
            raise ConfigError("basic runs need R0 (bound on the start distance) for the step scale")
        if config.schedule == "constant":
            return StepSchedule.constant_for_horizon(config.iters - 1, scale=scale)
        if config.schedule == "inverse-sqrt":
            return StepSchedule.inverse_sqrt(scale=scale)
        raise ConfigError(f"unknown schedule kind {config.schedule!r}")
    D = config.D
    if D is None and problem.truth is not None:
        D = problem.truth.D
    if D is None:
        raise ConfigError(f"method {config.method!r} needs the set-size bound D")
    scale = math.sqrt(2.0 * D)
    if config.schedule == "constant":
        return StepSchedule.constant_for_horizon(config.iters - 1, scale=scale)
    if config.schedule == "inverse-sqrt":
        return StepSchedule.inverse_sqrt(scale=scale)
    raise ConfigError(f"unknown schedule kind {config.schedule!r}")


def validate_config(config: RunConfig, problem: ProblemInstance) -> None:
    if config.method not in METHODS:
        raise ConfigError(f"unknown method {config.method!r}; options: {METHODS}")
    if config.iters < 1:
        raise ConfigError("iters must be >= 1")
    try:
        validate_pair(problem.geom, problem.Q)
    except CapabilityError as exc:
        raise ConfigError(str(exc)) from exc
    if config.method in ("composite", "classical"):
        fstar = config.fstar if config.fstar is not None else (
            problem.truth.Fstar if problem.truth else None
        )
        if fstar is None:
            raise ConfigError(f"method {config.method!r} needs F* (config fstar or instance truth)")
    if config.method in ("double-step", "switch1", "switch2") and not problem.constraints:
        raise ConfigError(f"method {config.method!r} needs functional constraints")
    if config.method == "unbounded":
        if not problem.constraints:
            raise ConfigError("unbounded method needs functional constraints")
        D0 = config.D0 if config.D0 is not None else (problem.truth.D0 if problem.truth else None)
        if D0 is None or config.eps is None:
            raise ConfigError("unbounded method needs D0 and eps")


def execute(config: RunConfig, problem: ProblemInstance | None = None) -> solvers.RunResult:
    if problem is None:
        problem = resolve_problem(config)
    validate_config(config, problem)
    method = config.method
    try:
        if method == "basic":
            return solvers.run_basic(problem, _build_schedule(config, problem), config.iters)
        if method == "composite":
            return solvers.run_composite_known_opt(problem, config.iters, fstar=config.fstar)
        if method == "classical":
            return solvers.run_classical_known_opt(problem, config.iters, fstar=config.fstar)
        if method == "double-step":
            return solvers.run_double_step(problem, _build_schedule(config, problem), config.iters)
        if method == "switch1":
            return solvers.run_switching_I(problem, _build_schedule(config, problem), config.iters)
        if method == "switch2":
            return solvers.run_switching_II(problem, _build_schedule(config, problem), config.iters)
        if method == "unbounded":
            D0 = config.D0 if config.D0 is not None else problem.truth.D0
            return solvers.run_unbounded(problem, GammaSchedule.sqrt(), D0, config.eps, config.iters)
    except HorizonTooShortError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown method {method!r}")


# -- trace and summary emission ----------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sgm-tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace(run: solvers.RunResult, path: str) -> None:
    dim = run.x0.size
    header = TRACE_BASE_COLUMNS + [f"x{j + 1}" for j in range(dim)]
    lines = [",".join(header)]
    for rec in run.records:
        row = [
            str(rec.k),
            rec.step_kind,
            str(rec.i),
            _fmt(rec.h),
            _fmt(rec.tau_or_gamma),
            _fmt(rec.lam),
            _fmt(rec.f0),
            _fmt(rec.max_fi),
            _fmt(rec.F),
            _fmt(rec.breg_step),
        ]
        row.extend(_fmt(v) for v in rec.x_next)
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_trace(path: str):
    """Parse a trace CSV back into a list of row dicts (floats round-trip)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if not line.strip():
                continue
            row = {}
            for name, tok in zip(header, parts):
                if name == "step_kind":
                    row[name] = tok
                elif name in ("k", "i"):
                    row[name] = int(tok)
                else:
                    row[name] = float(tok)
            row["x"] = np.array([row[f"x{j + 1}"] for j in range(len(header) - len(TRACE_BASE_COLUMNS))])
            rows.append(row)
    return rows


def _certificate_dict(cert) -> dict:
    if cert is None:
        return None
    return {
        "lambdas": [float(v) for v in cert.lambdas],
        "dual_value": float(cert.dual_value),
        "dual_tolerance": float(cert.dual_tolerance),
        "dual_mode": cert.dual_mode,
        "primal_best": float(cert.primal_best),
        "weighted_primal": None if cert.weighted_primal is None else float(cert.weighted_primal),
        "gap": float(cert.gap),
        "bound": float(cert.bound),
        "bound_holds": bool(cert.bound_holds),
        "h_kN": None if cert.h_kN is None else float(cert.h_kN),
        "slater_bound": None if cert.slater_bound_value is None else float(cert.slater_bound_value),
        "slater_holds": None if cert.slater_holds is None else bool(cert.slater_holds),
        "empirical_M0": bool(cert.empirical_M0),
        "attained": bool(cert.attained),
        "warnings": list(cert.warnings),
    }


def summarize(run: solvers.RunResult, config: RunConfig, certificate=None) -> dict:
    est = run.estimate
    return {
        "config": config.to_dict(),
        "tolerances": TOLERANCES,
        "problem": run.problem,
        "method": run.method,
        "steps_completed": len(run.records),
        "termination": run.termination,
        "window": list(run.window) if run.window else None,
        "best_f0": run.best_f0,
        "best_k": run.best_k,
        "sigma": [float(s) for s in est.sigma] if est else None,
        "lambdas": [float(v) for v in est.lambdas] if est and est.lambdas is not None else None,
        "certificate": _certificate_dict(certificate),
        "meta": {k: v for k, v in run.meta.items()},
    }


def write_summary(summary: dict, path: str) -> None:
    _atomic_write(path, json.dumps(summary, indent=2, allow_nan=True) + "\n")


def run_and_save(config: RunConfig) -> tuple[solvers.RunResult, dict, str, str]:
    problem = resolve_problem(config)
    run = execute(config, problem)
    cert = None
    if run.estimate is not None and run.estimate.sigma[0] > 0 and problem.constraints:
        try:
            restriction = problem.truth.D if (run.method == "unbounded" and problem.truth) else None
            cert = dualcert.gap_certificate(run, problem, restriction_D=restriction)
        except (SgmError, ValueError):
            cert = None
    out_dir = config.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{run.method}-{run.problem.replace('(', '_').replace(')', '').replace(',', '_')}"
    trace_path = os.path.join(out_dir, stem + ".trace.csv")
    summary_path = os.path.join(out_dir, stem + ".summary.json")
    write_trace(run, trace_path)
    summary = summarize(run, config, cert)
    write_summary(summary, summary_path)
    return run, summary, trace_path, summary_path


# -- certify: replay a stored trace -------------------------------------------


def certify(trace_path: str, summary_path: str) -> tuple[bool, list[str]]:
    """Recompute window sums, best value, and the dual value from a stored
    trace and compare them to the summary exactly (17-digit round-trip)."""
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    config = RunConfig.from_dict(summary["config"])
    problem = resolve_problem(config)
    rows = read_trace(trace_path)
    report = []
    ok = True

    window = summary.get("window")
    if window is None:
        return True, ["trace has no analysis window; nothing to certify"]
    lo, hi = window
    m = len(problem.constraints)
    sigma = np.zeros(m + 1)
    for row in rows:
        if lo <= row["k"] < hi:
            sigma[row["i"]] += row["lambda"]
    stored_sigma = np.array(summary["sigma"])
    if stored_sigma.shape == sigma.shape and np.array_equal(stored_sigma, sigma):
        report.append("sigma sums: MATCH")
    else:
        ok = False
        report.append(f"sigma sums: MISMATCH (stored {stored_sigma}, replayed {sigma})")

    if sigma[0] > 0:
        lambdas = sigma[1:] / sigma[0]
        stored_lambdas = np.array(summary["lambdas"]) if summary["lambdas"] is not None else None
        if stored_lambdas is not None and np.array_equal(stored_lambdas, lambdas):
            report.append("multiplier ratios: MATCH")
        else:
            ok = False
            report.append("multiplier ratios: MISMATCH")

        pool = [row["f0"] for row in rows if row["i"] == 0 and lo <= row["k"] < hi]
        best = min(pool) if pool else None
        if best == summary["best_f0"]:
            report.append("best objective: MATCH")
        else:
            ok = False
            report.append(f"best objective: MISMATCH (stored {summary['best_f0']}, replayed {best})")

        cert = summary.get("certificate")
        if cert is not None:
            restriction = problem.truth.D if (summary["method"] == "unbounded" and problem.truth) else None
            dv = dualcert.dual_value(problem, lambdas, restriction_D=restriction)
            if dv.value == cert["dual_value"] and best - dv.value == cert["gap"]:
                report.append("dual value and gap: MATCH")
            else:
                ok = False
                report.append(
                    f"dual value and gap: MISMATCH (stored {cert['dual_value']}, replayed {dv.value})"
                )
    return ok, report

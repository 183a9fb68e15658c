"""Command-line entry point.

Subcommands:
  run           execute one configured run, writing a trace CSV and summary JSON
  suite         run the acceptance experiments and print one pass/fail line each
  certify       recompute dual certificates from a stored trace and compare
  list-gallery  print the built-in problem names

Exit codes: 0 success, 1 assertion/certification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, InfeasibleProblemError, SgmError
from .harness import RunConfig, certify, run_and_save
from .oracles import list_gallery


def _parse_params(pairs):
    params = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--param expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        try:
            params[key] = int(val)
        except ValueError:
            try:
                params[key] = float(val)
            except ValueError:
                params[key] = val
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgm", description="primal subgradient method experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one run and write trace + summary")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gallery", help="gallery problem name")
    src.add_argument("--problem", help="path to a problem JSON file")
    run_p.add_argument("--method", required=True,
                       choices=["basic", "composite", "classical", "double-step", "switch1", "switch2", "unbounded"])
    run_p.add_argument("--iters", type=int, required=True)
    run_p.add_argument("--schedule", default="inverse-sqrt", choices=["constant", "inverse-sqrt"])
    run_p.add_argument("--D", type=float, help="set-size bound for bounded-set schedules")
    run_p.add_argument("--D0", type=float, help="distance estimate for the unbounded method")
    run_p.add_argument("--eps", type=float, help="violation tolerance for the unbounded method")
    run_p.add_argument("--R0", type=float, help="start-distance bound for the basic method")
    run_p.add_argument("--fstar", type=float, help="optimal value override for known-optimum rules")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument("--param", action="append", help="gallery parameter key=value (repeatable)")

    suite_p = sub.add_parser("suite", help="run the acceptance experiments")
    suite_p.add_argument("--filter", help="only experiments whose key contains this substring")

    cert_p = sub.add_parser("certify", help="replay a stored trace against its summary")
    cert_p.add_argument("--trace", required=True)
    cert_p.add_argument("--summary", required=True)

    sub.add_parser("list-gallery", help="print available gallery problems")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = RunConfig(
                problem=("gallery:" + args.gallery) if args.gallery else args.problem,
                method=args.method,
                iters=args.iters,
                schedule=args.schedule,
                D=args.D,
                D0=args.D0,
                eps=args.eps,
                R0=args.R0,
                fstar=args.fstar,
                seed=args.seed,
                out_dir=args.out,
                gallery_params=_parse_params(args.param),
            )
            run, summary, trace_path, summary_path = run_and_save(config)
            print(f"method={run.method} problem={run.problem} steps={len(run.records)} "
                  f"termination={run.termination}")
            if run.best_f0 is not None:
                print(f"best objective over the analysis set: {run.best_f0:.12g} (k={run.best_k})")
            if summary.get("lambdas") is not None:
                print(f"multiplier estimates: {summary['lambdas']}")
            cert = summary.get("certificate")
            if cert is not None:
                print(f"dual value {cert['dual_value']:.12g} ({cert['dual_mode']}), "
                      f"gap {cert['gap']:.6g}, bound {cert['bound']:.6g}, holds={cert['bound_holds']}")
            print(f"trace:   {trace_path}")
            print(f"summary: {summary_path}")
            return 0
        if args.command == "suite":
            results = __import__("sgm.suite", fromlist=["run_suite"]).run_suite(args.filter)
            if not results:
                print(f"no experiments match filter {args.filter!r}", file=sys.stderr)
                return 2
            return 0 if all(r.passed for r in results) else 1
        if args.command == "certify":
            ok, report = certify(args.trace, args.summary)
            for line in report:
                print(line)
            return 0 if ok else 1
        if args.command == "list-gallery":
            for name, desc in list_gallery().items():
                print(f"{name:22s} {desc}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleProblemError as exc:
        print(f"infeasibility certificate: {exc}", file=sys.stderr)
        return 1
    except SgmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""
Command line front end: ``polymerlab {constants,beta2,moments,run,report}``.

Exit codes: 0 success (every gating statistic passed), 1 a test failed, 2 usage, parameter or
config error and missing or corrupt run output.
"""
import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, replace
from typing import Any, Dict, List, Optional, Sequence

from .environment import (
    create_named_family,
    find_beta2,
    parse_family_params,
    second_moment_winfty,
    temperature_profile,
)
from .errors import ConfigError, DomainError, ParameterError, PrecisionError, ResourceError
from .experiments import ExperimentConfig, run_experiment
from .experiments.harness import STATUS_COMPLETE, cache_dir, tables_dir
from .oracle import cached_adjudication, load_verdict, overlap_trajectory
from .utils.io import dumps, read_json
from .utils.logging import get_logger
from .walk import pi_d, return_probabilities, table_cache, zeta_d, zeta_d_limit
from .walk.return_probability import DEFAULT_TABLE_K

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
MOMENT_COLUMNS = ("n", "exact_EW2", "closed_form_A", "closed_form_B", "bridge_value", "exact_ED2")
# commands whose stdout is JSON or CSV; the colossalai logger shares stdout
MACHINE_OUTPUT = ("constants", "beta2", "moments")


def _family(args):
    return create_named_family(args.family, **parse_family_params(args.params))


#################################################################################
#                                  Subcommands                                  #
#################################################################################


def cmd_constants(args) -> int:
    family = _family(args)
    pi = pi_d(args.d, tol=args.tol, k_max=args.kmax)
    table = return_probabilities(args.d, max(args.kmax or 0, DEFAULT_TABLE_K, 4 * args.n))
    out: Dict[str, Any] = {
        "d": args.d,
        "pi_d": pi.value,
        "pi_d_error": pi.error,
        "table_kmax": table.k_max,
        "zeta_d": zeta_d(args.d, args.n, k_max=table.k_max),
        "zeta_d_n": args.n,
        "zeta_d_limit": zeta_d_limit(args.d),
    }
    if args.beta is None:
        out["beta2"] = find_beta2(family, -math.log(pi.value))
    else:
        profile = temperature_profile(family, args.beta, args.d)
        out["profile"] = profile.to_dict()
        out["winfty"] = second_moment_winfty(profile)._asdict() if profile.in_l2_region else None
        verdict = None
        if profile.in_l2_region and profile.kappa2 > 0:
            if args.adjudicate:
                verdict = cached_adjudication(cache_dir(), args.d, profile.lambda2)
            else:
                verdict = load_verdict(cache_dir(), args.d, profile.lambda2)
        out["oracle_verdict"] = asdict(verdict) if verdict is not None else None
    print(dumps(out))
    return EXIT_OK


def cmd_beta2(args) -> int:
    family = _family(args)
    pi = pi_d(args.d)
    threshold = -math.log(pi.value)
    out = {
        "d": args.d,
        "family": family.name,
        "params": family.params,
        "threshold": threshold,
        "lambda2_sup": family.lambda2_sup(),
        "beta2": find_beta2(family, threshold),
    }
    print(dumps(out))
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.lambda2 is not None:
        lambda2 = args.lambda2
    elif args.beta is not None:
        lambda2 = temperature_profile(_family(args), args.beta, args.d).lambda2
    else:
        raise ParameterError("moments needs --lambda2 or --beta")
    if args.n_max < 0 or args.stride < 1:
        raise ParameterError("--n-max must be >= 0 and --stride >= 1")
    trajectory = overlap_trajectory(args.d, lambda2, args.n_max)
    table = return_probabilities(args.d, args.n_max + 1)
    pi, growth = pi_d(args.d).value, math.exp(lambda2)
    if pi * growth < 1.0:
        closed_b = (1.0 - pi) / (1.0 - pi * growth)
        closed_a = closed_b * growth
    else:
        closed_a = closed_b = math.inf
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(MOMENT_COLUMNS)
    for n in range(0, args.n_max + 1, args.stride):
        row = (
            trajectory.second_moments[n],
            closed_a,
            closed_b,
            trajectory.pinned[n] / table[n + 1],
            math.expm1(lambda2) * trajectory.pinned[n],
        )
        writer.writerow([n] + [repr(v) for v in row])
    return EXIT_OK


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.allow_outside_l2:
        config = replace(config, allow_outside_l2=True)
    run_dir = args.out or os.path.join("runs", os.path.splitext(os.path.basename(args.config))[0])
    result = run_experiment(config, run_dir, threads=args.threads, quiet=args.quiet)
    if not args.quiet:
        print(render_report(read_json(os.path.join(run_dir, "report.json")), partial=False))
    return result.exit_code


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_report(report: Dict[str, Any], partial: bool) -> str:
    """Fixed-width table: one row per statistic, or one row per skipped or erroneous test."""
    columns = ("test", "statistic", "n", "value", "reference", "tolerance", "verdict")
    widths = (16, 46, 6, 14, 14, 44, 8)
    lines: List[str] = []
    if partial:
        lines.append("PARTIAL RUN: the run directory is incomplete, results below may be stale")
    lines.append("".join(c.ljust(w) for c, w in zip(columns, widths)))
    for test in report["tests"]:
        lines.append(f"# {test['name']}: {test['status']}  [{test['anchor']}]")
        if test["status"] in ("skipped", "error"):
            lines.append("".join(str(c).ljust(w) for c, w in zip((test["name"], test["reason"]), widths)))
        for entry in test["entries"]:
            if entry["passed"] is None:
                verdict = "inconclusive" if entry["gating"] else "info"
            else:
                verdict = "pass" if entry["passed"] else "FAIL"
            cells = (
                test["name"],
                entry["name"],
                _fmt(entry["n"]),
                _fmt(entry["value"]),
                _fmt(entry["reference"]),
                entry["tolerance"],
                verdict if entry["gating"] or entry["passed"] is None else f"({verdict})",
            )
            lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def failing_entries(report: Dict[str, Any]) -> List[str]:
    out = []
    for test in report["tests"]:
        if test["status"] == "error":
            out.append(f"{test['name']}: error: {test['reason']}")
        if test["status"] != "fail":
            continue
        for entry in test["entries"]:
            if entry["gating"] and entry["passed"] is False:
                where = f" at n={entry['n']}" if entry["n"] is not None else ""
                out.append(f"{test['name']}: {entry['name']}{where} = {_fmt(entry['value'])}, tolerance {entry['tolerance']}")
    return out


def cmd_report(args) -> int:
    path = os.path.join(args.run_dir, "report.json")
    try:
        report = read_json(path)
        if not isinstance(report, dict) or not isinstance(report.get("tests"), list):
            raise KeyError("tests")
    except FileNotFoundError:
        print(f"error: {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        print(f"error: {path} is corrupt: {e}", file=sys.stderr)
        return EXIT_USAGE
    manifest_path = os.path.join(args.run_dir, "manifest.json")
    try:
        partial = read_json(manifest_path).get("status") != STATUS_COMPLETE
    except (FileNotFoundError, json.JSONDecodeError):
        partial = True
    print(render_report(report, partial))
    failures = failing_entries(report)
    for line in failures:
        print(f"FAILED {line}")
    return EXIT_FAILED if failures else EXIT_OK


#################################################################################
#                                    Parsing                                    #
#################################################################################


def _add_family_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", type=int, default=3, help="lattice dimension, 3 to 5")
    parser.add_argument("--family", type=str, default="gaussian", help="disorder family")
    parser.add_argument("--params", type=str, default="", help="family parameters, e.g. 'p=0.3'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymerlab", description="Directed polymer numerical lab")
    sub = parser.add_subparsers(dest="command", required=True)

    constants = sub.add_parser("constants", help="walk constants and the temperature profile as JSON")
    _add_family_args(constants)
    constants.add_argument("--beta", type=float, default=None)
    constants.add_argument("--n", type=int, default=256, help="time at which zeta_d(n) is evaluated")
    constants.add_argument("--kmax", type=int, default=None, help="return probability table size")
    constants.add_argument("--tol", type=float, default=1e-5, help="error bound on pi_d")
    constants.add_argument("--adjudicate", action="store_true", help="run the E[W_inf^2] adjudication if not cached")
    constants.set_defaults(func=cmd_constants)

    beta2 = sub.add_parser("beta2", help="the L2 critical inverse temperature")
    _add_family_args(beta2)
    beta2.set_defaults(func=cmd_beta2)

    moments = sub.add_parser("moments", help="exact second moments as CSV")
    _add_family_args(moments)
    moments.add_argument("--lambda2", type=float, default=None)
    moments.add_argument("--beta", type=float, default=None)
    moments.add_argument("--n-max", type=int, default=256)
    moments.add_argument("--stride", type=int, default=1)
    moments.set_defaults(func=cmd_moments)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", type=str)
    run.add_argument("--out", type=str, default=None, help="run directory, default runs/<config name>")
    run.add_argument("--threads", type=int, default=None, help="worker processes, default POLYMERLAB_THREADS")
    run.add_argument("--allow-outside-l2", action="store_true")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="summarise a run directory")
    report.add_argument("run_dir", type=str)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    get_logger().set_level("ERROR" if args.command in MACHINE_OUTPUT else "INFO")
    try:
        with table_cache(tables_dir()):
            return args.func(args)
    except (ConfigError, ParameterError, DomainError, PrecisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as e:
        get_logger().error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Verbs::

    bundlekit run <config>                 execute an experiment grid
    bundlekit fit <files...> --kind KIND   rate fit over traces or a summary
    bundlekit accept                       run the acceptance suite
    bundlekit lemma-recurrence ...         numeric check of the k^2 bound
    bundlekit dump-problem <descriptor>    resolve and print a problem

Exit codes: 0 success, 1 acceptance/criteria failure, 2 config error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .acceptance import run_acceptance
from .errors import ConfigError, InputDomainError, NumericError, OracleFailureError
from .harness import fit_rates, parse_experiment_config, read_trace_csv, \
    recurrence_lemma_check, run_experiment
from .problems import format_descriptor, make_problem

EXIT_OK = 0
EXIT_CRITERIA = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cmd_run(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8")
    config = parse_experiment_config(text)
    summary = run_experiment(config, output_dir=args.output_dir)
    failures = [r for r in summary["runs"] if r["error"] is not None]
    out_dir = args.output_dir if args.output_dir is not None else config.output_dir
    print(f"wrote {len(summary['runs'])} runs to {out_dir}")
    for r in summary["runs"]:
        tag = f"eps={r['epsilon']:g} seed={r['seed']}"
        if r["error"] is not None:
            print(f"  {tag}: ERROR {r['error']}")
        else:
            print(f"  {tag}: gap={r['final_gap']!r} serious={r['serious_steps']} "
                  f"iters={r['iterations']} max_null={r['max_null_run']} "
                  f"envelope_violations={r['envelope_violations']}")
    return EXIT_NUMERIC if failures else EXIT_OK


def _cmd_fit(args) -> int:
    points = []
    if args.kind == "gap":
        for path in args.files:
            serious = 0
            for row in read_trace_csv(path):
                if row["step_kind"] == "serious":
                    serious += 1
                    points.append((serious, row["gap"]))
    else:
        for path in args.files:
            summary = json.loads(Path(path).read_text(encoding="utf-8"))
            for run in summary["runs"]:
                if run.get("max_null_run") is not None:
                    points.append((run["epsilon"], run["max_null_run"]))
    fit = fit_rates(points, args.kind)
    print(f"kind={fit.kind} n={fit.n_points} slope={fit.slope!r} "
          f"intercept={fit.intercept!r} r_squared={fit.r_squared!r}")
    return EXIT_OK


def _cmd_accept(args) -> int:
    numbers = None
    if args.criteria:
        numbers = [int(tok) for tok in args.criteria.split(",") if tok.strip()]
    results, report = run_acceptance(numbers)
    print(report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CRITERIA


def _cmd_lemma(args) -> int:
    check = recurrence_lemma_check(args.r0, args.cprime, args.kmax)
    if check.ok:
        print(f"bound holds for all k in [1, {args.kmax}]")
        return EXIT_OK
    print(f"bound violated first at k={check.first_violation}")
    return EXIT_CRITERIA


def _cmd_dump_problem(args) -> int:
    raw = args.descriptor
    path = Path(raw)
    text = path.read_text(encoding="utf-8") if path.exists() else raw
    problem = make_problem(text)
    print(f"descriptor={format_descriptor(problem.descriptor)}")
    obj = problem.objective
    for label, value in (("L", getattr(obj, "L", None)),
                         ("L_g", getattr(obj, "L_g", None)),
                         ("f_star", problem.f_star)):
        if value is not None:
            print(f"{label}={value!r}")
    if problem.x_star is not None:
        print("x_star=" + " ".join(repr(float(v)) for v in problem.x_star))
    if problem.f_star_kind is not None:
        print(f"f_star_kind={problem.f_star_kind}")
    print("x0=" + " ".join(repr(float(v)) for v in problem.x0))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bundlekit",
        description="Proximal bundle methods with smooth lower models "
                    "and a rate-verification harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_fit = sub.add_parser("fit", help="least-squares rate fit")
    p_fit.add_argument("files", nargs="+",
                       help="trace CSVs (gap) or summary.json files (nullrun)")
    p_fit.add_argument("--kind", choices=("gap", "nullrun"), required=True)
    p_fit.set_defaults(func=_cmd_fit)

    p_acc = sub.add_parser("accept", help="run the acceptance suite")
    p_acc.add_argument("--criteria", default=None,
                       help="comma-separated criterion numbers (default: all)")
    p_acc.set_defaults(func=_cmd_accept)

    p_lem = sub.add_parser("lemma-recurrence",
                           help="simulate the recurrence and check its k^2 bound")
    p_lem.add_argument("--r0", type=float, required=True)
    p_lem.add_argument("--cprime", type=float, required=True)
    p_lem.add_argument("--kmax", type=int, default=10_000)
    p_lem.set_defaults(func=_cmd_lemma)

    p_dump = sub.add_parser("dump-problem", help="resolve a problem descriptor")
    p_dump.add_argument("descriptor", help="descriptor file or inline key=value text")
    p_dump.set_defaults(func=_cmd_dump_problem)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputDomainError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, OracleFailureError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

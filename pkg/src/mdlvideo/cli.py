"""Command-line entry point.

Subcommands: train (a config file or a named template), audit (the built-in
x3d-m goldens or a custom .spec file), report (aggregate finished run dirs),
gradcheck (the full finite-difference suite).

Exit codes: 0 success, 2 configuration problems (argparse usage errors
included), 3 golden parameter-table failures, 4 NaN-loss aborts, 1 anything
else. Output defaults to $MDLVIDEO_OUTPUT_ROOT, then ./runs.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .audit import (audit, evaluate_golden, parse_spec_file, render_budget,
                    render_golden_report, write_golden_csv)
from .errors import ConfigError, NanLossError
from .experiments import TEMPLATES, parse_config_file, run_experiment, \
    write_report
from .gradcheck import run_gradient_suite

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_GOLDEN = 3
EXIT_NAN = 4

OUTPUT_ROOT_ENV = "MDLVIDEO_OUTPUT_ROOT"


def _output_root(flag_value) -> Path:
    if flag_value:
        return Path(flag_value)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _cmd_train(args) -> int:
    if args.config in TEMPLATES:
        configs = TEMPLATES[args.config]()
    else:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(
                f"{args.config!r} is neither a config file nor a template; "
                f"templates: {', '.join(sorted(TEMPLATES))}")
        configs = [parse_config_file(path)]
    out_root = _output_root(args.out)
    for cfg in configs:
        print(f"== {cfg.name}: {len(cfg.seeds)} seed(s) -> "
              f"{out_root / cfg.name}")
        for summary in run_experiment(cfg, out_root):
            tops = ", ".join(
                f"{summary['domains'][d]}={v:.3f}"
                for d, v in sorted(summary["final_top1"].items()))
            print(f"   seed {summary['seed']}: {tops} "
                  f"({summary['wall_s']:.1f}s)")
    return EXIT_OK


def _cmd_audit(args) -> int:
    if args.spec == "x3d-m":
        results = evaluate_golden()
        print(render_golden_report(results))
        if args.csv:
            write_golden_csv(results, args.csv)
            print(f"wrote {args.csv}")
        return EXIT_OK if all(r.passed for r in results) else EXIT_GOLDEN
    scenario = parse_spec_file(args.spec)
    budget = audit(scenario)
    print(render_budget(budget, title=scenario.spec.name))
    print("custom spec: no golden comparisons")
    return EXIT_OK


def _cmd_report(args) -> int:
    out_dir = _output_root(args.out) / "report"
    agg = write_report(args.run_dirs, out_dir)
    print(f"aggregated {len(agg['seeds'])} run(s) of "
          f"{agg['experiment']} (config {agg['config_hash']})")
    for dom_id, row in sorted(agg["per_domain"].items()):
        print(f"   {row['name']}: top-1 mean {row['mean_top1']:.3f} "
              f"(min {row['min_top1']:.3f}, max {row['max_top1']:.3f}, "
              f"n={row['n_runs']})")
    print(f"wrote {out_dir}/report.csv and {out_dir}/curves.svg")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    reports = run_gradient_suite(draws=args.draws, verbose=args.verbose,
                                 printer=print)
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} gradient checks pass")
    return EXIT_OK if not failed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdlvideo",
        description="multi-domain video recognition experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser(
        "train", help="run a config file or a named template")
    p_train.add_argument("config",
                         help=f"path to .ini/.json config, or one of: "
                              f"{', '.join(sorted(TEMPLATES))}")
    p_train.add_argument("--out", default=None,
                         help=f"output root (default ${OUTPUT_ROOT_ENV} "
                              f"or ./runs)")
    p_train.set_defaults(fn=_cmd_train)

    p_audit = sub.add_parser(
        "audit", help="parameter tables: 'x3d-m' goldens or a .spec file")
    p_audit.add_argument("spec", help="'x3d-m' or path to a key=value .spec")
    p_audit.add_argument("--csv", default=None,
                         help="also write the table to this CSV path")
    p_audit.set_defaults(fn=_cmd_audit)

    p_report = sub.add_parser(
        "report", help="aggregate seeds of finished run directories")
    p_report.add_argument("run_dirs", nargs="+")
    p_report.add_argument("--out", default=None)
    p_report.set_defaults(fn=_cmd_report)

    p_grad = sub.add_parser(
        "gradcheck", help="run the finite-difference suite")
    p_grad.add_argument("--draws", type=int, default=3,
                        help="random shape draws per op (default 3)")
    p_grad.add_argument("--verbose", action="store_true",
                        help="print every check, not just failures")
    p_grad.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NanLossError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NAN


if __name__ == "__main__":
    sys.exit(main())

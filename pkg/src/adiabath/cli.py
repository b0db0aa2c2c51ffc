"""Command line: `adiabath run | report | list`.

Exit codes: 0 every check passed, 1 some check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import parse_config
from .grid import ConfigurationError
from .runner import ALL, CHECKS, EXPERIMENTS, experiment_names, run_experiment

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _status(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def _cmd_run(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text, known_experiments=experiment_names(), known_checks=CHECKS)
        if args.experiment:
            if args.experiment not in experiment_names():
                raise ConfigurationError(f"unknown experiment {args.experiment!r}")
            config = replace(config, experiments=(args.experiment,))
        if args.out:
            config = replace(config, output_dir=Path(args.out))
        results = run_experiment(config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ok = True
    for result in results:
        for r in result.reports:
            print(f"{_status(r.passed)}  {result.experiment}.{r.check_id}  measured={r.measured:.3e}  tol={r.tolerance:.3e}")
        ok &= result.passed
    print(f"report: {Path(config.output_dir) / 'report.csv'}")
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_report(args) -> int:
    path = Path(args.dir) / "report.csv"
    if not path.is_file():
        print(f"error: no report.csv in {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    failed = [r for r in rows if r["passed"] != "true"]
    by_experiment: dict[str, list[dict]] = {}
    for r in rows:
        by_experiment.setdefault(r["experiment"], []).append(r)
    for name, items in by_experiment.items():
        bad = sum(r["passed"] != "true" for r in items)
        print(f"{name}: {len(items) - bad}/{len(items)} passed")
    for r in failed:
        print(f"  FAIL {r['experiment']}.{r['check_id']} measured={r['measured']} tol={r['tolerance']}")
    tables = sorted(p.name for p in Path(args.dir).glob("*.csv") if p.name != "report.csv")
    if tables:
        print("tables: " + ", ".join(tables))
    return EXIT_OK if not failed else EXIT_FAILED


def _cmd_list(args) -> int:
    for name, (_, anchor) in EXPERIMENTS.items():
        print(f"{name:20s} {anchor}")
    print(f"{ALL:20s} every experiment above")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adiabath", description="verification experiments for the open-system invariant")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments named in a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--experiment", help="run only this experiment")
    run.set_defaults(func=_cmd_run)
    report = sub.add_parser("report", help="summarize report.csv in a previous output directory")
    report.add_argument("--dir", required=True)
    report.set_defaults(func=_cmd_report)
    lst = sub.add_parser("list", help="list experiments")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

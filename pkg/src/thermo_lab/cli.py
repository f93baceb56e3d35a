"""Command line entry point: run, sweep, mms, report.

Exit codes: 0 all verdicts pass, 2 an asymptotic verdict fails, 3 solver
blow-up, 4 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import (
    ConfigError,
    SweepConfig,
    eps_sweep,
    load_config,
    reevaluate,
    refinement_study,
    run_experiment,
    write_report,
)
from .solver import BlowUpError, SolverError

EXIT_OK = 0
EXIT_VERDICT = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4


def _parse_eps(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermo-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration and write its report")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("sweep", help="eps-sweep of one configuration")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--eps", required=True, type=_parse_eps, help="comma-separated, decreasing")
    s.add_argument("--out", required=True, type=Path)

    m = sub.add_parser("mms", help="manufactured-solution refinement study")
    m.add_argument("--levels", type=int, default=4)
    m.add_argument("--out", required=True, type=Path)

    rep = sub.add_parser("report", help="re-evaluate verdicts from a run directory")
    rep.add_argument("--in", dest="indir", required=True, type=Path)
    return p


def _print_report(report):
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_VERDICT


def _cmd_run(args):
    cfg = load_config(args.config)
    result = run_experiment(cfg, out=args.out, keep_trajectory=False)
    return _print_report(result.report)


def _cmd_sweep(args):
    base = load_config(args.config)
    sweep = SweepConfig(base, args.eps)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.txt").write_text(base.to_text(), encoding="utf-8")
    result = eps_sweep(sweep)
    result.to_csv(args.out / "sweep.csv")
    text = result.to_text()
    (args.out / "sweep_report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if result.passed else EXIT_VERDICT


def _cmd_mms(args):
    try:
        study = refinement_study(args.levels)
    except ValueError as exc:
        raise ConfigError([f"levels: {exc}"]) from exc
    args.out.mkdir(parents=True, exist_ok=True)
    study.to_csv(args.out / "mms.csv")
    for key, orders in study.orders.items():
        print(f"{key}: orders {' '.join(f'{o:.3f}' for o in orders)}")
    print(f"verdict.mms={'pass' if study.passed else 'fail'}")
    return EXIT_OK if study.passed else EXIT_VERDICT


def _cmd_report(args):
    report = reevaluate(args.indir)
    write_report(args.indir / "report.txt", report)
    return _print_report(report)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "mms": _cmd_mms, "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())

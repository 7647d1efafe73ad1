"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(missing/malformed input, leakage, corrupt checkpoint), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import (
    AUGMENTERS,
    ConfigError,
    StageError,
    echo_config,
    load_config,
    output_lock,
    run_pipeline,
    run_stage,
    write_manifest,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config (default: bundled sample)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--augmenter", choices=AUGMENTERS, help="generator used by the augment stage")
    p.add_argument("--windows", type=int, help="number of 24-step windows to generate")
    p.add_argument("--input", type=Path, help="hourly load/weather CSV")
    p.add_argument("--next-day", type=Path, help="24-row weather feature CSV for dispatch")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--epochs", type=int, help="diffusion training epochs")
    p.add_argument("--kinds", help="comma-separated forecaster kinds to benchmark")
    p.add_argument("--cost-grid", type=float)
    p.add_argument("--cost-pv", type=float)
    p.add_argument("--pv-capacity", type=float, help="PV capacity in kW at 1000 W/m^2")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loadaug", description="Augment, forecast and dispatch small hourly load datasets.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "ingest": "validate the input CSV and split it chronologically",
        "augment": "train the augmenter on the training rows and generate new rows",
        "train-forecaster": "fit the forecaster used for next-day dispatch",
        "evaluate": "benchmark forecasters on original, replicated and augmented data",
        "diagnose": "fidelity statistics and plots for the generated rows",
        "dispatch": "forecast next-day load and solve the PV/grid dispatch",
        "pipeline": "run every stage in order",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "dispatch":
            p.add_argument("--problem", type=Path, help="solve this hour,load_kw,pv_max_kw CSV instead of forecasting")
    return parser


def config_from_args(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    if args.augmenter is not None:
        cfg.augment.kind = args.augmenter
    if args.windows is not None:
        cfg.augment.n_windows = args.windows
    if args.input is not None:
        cfg.data.input_csv = str(args.input)
    if args.next_day is not None:
        cfg.data.next_day_csv = str(args.next_day)
    if args.train_fraction is not None:
        cfg.data.train_fraction = args.train_fraction
    if args.epochs is not None:
        cfg.augment.diffusion = {**cfg.augment.diffusion, "epochs": args.epochs}
    if args.kinds is not None:
        cfg.forecast.kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    if args.cost_grid is not None:
        cfg.dispatch.cost_grid = args.cost_grid
    if args.cost_pv is not None:
        cfg.dispatch.cost_pv = args.cost_pv
    if args.pv_capacity is not None:
        cfg.dispatch.pv_capacity_kw = args.pv_capacity
    return cfg.validate()


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, FloatingPointError):
        return EXIT_NUMERIC
    # DataError, LeakageError, CheckpointError, missing files and the rest
    return EXIT_DATA


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "pipeline":
            manifest = run_pipeline(cfg)
            s = manifest["summary"]
            print(f"pipeline finished: {s['benchmark_rows']} benchmark rows, {s['plots']} plots, "
                  f"{s['dispatch_schedules']} dispatch schedule(s) in {cfg.out}")
            return EXIT_OK
        out = Path(cfg.out)
        with output_lock(out):
            echo_config(cfg, out)
            kwargs = {"problem_csv": args.problem} if args.command == "dispatch" and args.problem else {}
            files = run_stage(args.command, cfg, out, **kwargs)
            write_manifest(out)
        for f in files:
            print(f)
        return EXIT_OK
    except (ConfigError, StageError) as exc:
        print(f"loadaug: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())


"""``adamuon`` command line: run, check, sweep, plot.

Exit status: 0 success, 1 error (bad config, I/O, failed check), 2 divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .checks import run_checks
from .config import ConfigError, load_config, with_lr
from .densecore import QUINTIC
from .harness import ExperimentConfig, RunResult, run_experiment, write_csv
from .plot import PlotError, plot_csvs

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _summary(config: ExperimentConfig, result: RunResult) -> str:
    stt = "n/a" if result.steps_to_threshold is None else str(result.steps_to_threshold)
    status = "diverged" if result.diverged else "ok"
    return f"{config.run_name}: final_loss={result.final_loss!r} steps_to_threshold={stt} status={status}"


def cmd_run(config_path, out_dir) -> int:
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        _err(f"{config_path}: {exc}")
        return EXIT_ERROR
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        result = run_experiment(config)
        write_csv(result.records, out_dir / f"{config.run_name}.csv")
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    print(_summary(config, result))
    return EXIT_DIVERGED if result.diverged else EXIT_OK


def cmd_check(quintic_terms=QUINTIC.terms, stream=None) -> int:
    stream = stream or sys.stdout
    results = run_checks(quintic_terms)
    for r in results:
        print(r.line(), file=stream)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=stream)
    return EXIT_OK if failed == 0 else EXIT_ERROR


def _lr_tag(lr: float) -> str:
    return repr(float(lr)).replace("+", "")


def _run_one(config: ExperimentConfig) -> RunResult:
    return run_experiment(config)


def cmd_sweep(config_path, lrs, out_dir, jobs: int = 1) -> int:
    if not lrs:
        _err("sweep needs at least one learning rate")
        return EXIT_ERROR
    try:
        base = load_config(config_path)
        configs = [with_lr(base, lr) for lr in sorted(set(float(x) for x in lrs))]
    except (ConfigError, ValueError) as exc:
        _err(f"{config_path}: {exc}")
        return EXIT_ERROR
    configs = [replace(c, run_name=f"{base.run_name}_lr{_lr_tag(c.hyper.eta)}") for c in configs]
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, configs))
        else:
            results = [run_experiment(c) for c in configs]
        for config, result in zip(configs, results):
            write_csv(result.records, out_dir / f"{config.run_name}.csv")
            print(_summary(config, result))
        with open(out_dir / "sweep_summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lr", "final_loss", "steps_to_threshold", "diverged"])
            for config, result in zip(configs, results):
                stt = "" if result.steps_to_threshold is None else result.steps_to_threshold
                diverged = "true" if result.diverged else "false"
                writer.writerow([repr(config.hyper.eta), repr(result.final_loss), stt, diverged])
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    return EXIT_OK if any(not r.diverged for r in results) else EXIT_DIVERGED


def cmd_plot(csv_paths, out_path) -> int:
    try:
        plot_csvs(csv_paths, out_path)
    except PlotError as exc:
        _err(str(exc))
        return EXIT_ERROR
    except OSError as exc:
        _err(f"{out_path}: {exc.strerror or exc}")
        return EXIT_ERROR
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    # usage errors map to exit 1; argparse's default 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adamuon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train one configuration and write <run_name>.csv")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)

    check = sub.add_parser("check", help="run the invariant battery")
    check.add_argument(
        "--quintic",
        type=_float_list,
        default=list(QUINTIC.terms),
        help="override the quintic Newton-Schulz coefficients a,b,c (fault injection)",
    )

    sweep = sub.add_parser("sweep", help="run a configuration once per learning rate")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--lrs", required=True, type=_float_list)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--jobs", type=int, default=1)

    plot = sub.add_parser("plot", help="render loss curves from run CSVs as SVG")
    plot.add_argument("--out", required=True)
    plot.add_argument("csv", nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "check":
        return cmd_check(tuple(args.quintic))
    if args.command == "sweep":
        return cmd_sweep(args.config, args.lrs, args.out, args.jobs)
    return cmd_plot(args.csv, args.out)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 when the report verdict is pass, 1 when it is fail, 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, default_config, load_config
from .experiments import run_experiment
from .report import TraceLog

log = logging.getLogger("hqs")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class RunSpec:
    experiment: str
    config_path: Path | None = None
    seed: int | None = None
    trials: int | None = None
    fmt: str = "json"
    out: Path | None = None
    trace: bool = False


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("trials must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hqs", description="Hidden quantum state outcome-selection experiments.")
    parser.add_argument("experiment", choices=EXPERIMENTS, help="experiment to run")
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON config laid over the experiment defaults")
    src.add_argument("--defaults", action="store_true",
                     help="use the built-in worked-example configuration (the default when --config is absent)")
    parser.add_argument("--seed", type=_u64, help="seed override (falls back to $HQS_SEED)")
    parser.add_argument("--trials", type=_positive, help="trial count override")
    parser.add_argument("--out", type=Path, help="report path (stdout when omitted)")
    parser.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")
    parser.add_argument("--trace", action="store_true",
                        help="also write per-trial selection traces as JSON lines (capped at 10^4)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_args(argv: list[str] | None = None) -> RunSpec:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed = args.seed
    if seed is None and os.environ.get("HQS_SEED"):
        try:
            seed = _u64(os.environ["HQS_SEED"])
        except argparse.ArgumentTypeError as exc:
            parser.error(f"HQS_SEED: {exc}")
    return RunSpec(args.experiment, args.config, seed, args.trials, args.fmt, args.out, args.trace)


def _trace_path(spec: RunSpec) -> Path:
    if spec.out is None:
        return Path(f"{spec.experiment}.trace.jsonl")
    return spec.out.with_name(spec.out.name + ".trace.jsonl")


def execute(spec: RunSpec) -> int:
    try:
        if spec.config_path is not None:
            config = load_config(spec.config_path, spec.experiment)
        else:
            config = default_config(spec.experiment)
        config = config.with_overrides(seed=spec.seed, trials=spec.trials)
        trace = TraceLog() if spec.trace else None
        log.info("running %s with seed %d, %d trials", config.name, config.seed, config.trials)
        report = run_experiment(config, trace)
    except ValueError as exc:
        # ConfigError and experiment/selector validation errors
        print(f"hqs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = report.to_json() if spec.fmt == "json" else report.to_csv()
    if spec.out is None:
        sys.stdout.write(text)
    else:
        spec.out.write_text(text, encoding="utf-8")
    if trace is not None:
        _trace_path(spec).write_text(trace.to_jsonl(), encoding="utf-8")
    for gate in report.gates:
        if not gate.passed:
            log.warning("gate failed: %s = %.6g (tolerance %g)", gate.description, gate.value, gate.tolerance)
    return EXIT_PASS if report.verdict == "pass" else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    return execute(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())

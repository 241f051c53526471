import argparse
import contextlib
import logging
import sys
from pathlib import Path
from typing import Iterator, List, Optional, TextIO

from pydantic import ValidationError

from project.config import ExperimentConfig, ExperimentKind, load_config
from project.errors import ConfigError, SchedulerError, TraceParseError, TraceStructureError
from project.harness import (
    improvement_table,
    run_adapt_phases,
    run_oracle,
    run_select,
    run_simulate,
    run_sweep,
    write_history,
    write_rows,
)
from project.market_model import dump_trace, synthesize_trace
from project.policies import format_policy, parse_policy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SWEEP_KINDS = {
    "deadline": ExperimentKind.SWEEP_DEADLINE,
    "overhead": ExperimentKind.SWEEP_OVERHEAD,
    "avail": ExperimentKind.SWEEP_AVAIL,
    "price": ExperimentKind.SWEEP_PRICE,
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--seed", type=int, help="override experiment seed")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--format", choices=["csv", "jsonl"], help="output format")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="root logger level",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="spotsched",
        description="Deadline-aware spot/on-demand scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run each policy on sampled jobs")
    sweep = sub.add_parser("sweep", parents=[common], help="mean utility over a parameter grid")
    sweep.add_argument(
        "--param",
        choices=sorted(SWEEP_KINDS),
        help="swept parameter (default: from the config's experiment kind)",
    )
    sweep.add_argument(
        "--reference",
        metavar="POLICY",
        help="write the relative improvement of this configured policy over each other one instead of the means",
    )
    sub.add_parser("select", parents=[common], help="online policy selection")
    sub.add_parser("adapt", parents=[common], help="online selection across noise phases")
    sub.add_parser("oracle", parents=[common], help="offline optimum for one job")
    sub.add_parser("synth-trace", parents=[common], help="write a synthetic trace CSV")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Loads the config file (or defaults) and applies --seed, --out and --format on top."""
    config = load_config(args.config) if args.config is not None else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    output = {}
    if args.out is not None:
        output["path"] = args.out
    if args.format is not None:
        output["format"] = args.format
    if output:
        updates["output"] = config.output.model_copy(update=output)
    if updates:
        # model_copy skips validation; round-trip so overrides are checked like file values.
        config = ExperimentConfig.model_validate({**config.model_dump(), **updates})
    return config


@contextlib.contextmanager
def _open_sink(path: Optional[Path]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        yield f


def _sweep_kind(args: argparse.Namespace, config: ExperimentConfig) -> ExperimentKind:
    if getattr(args, "param", None):
        return SWEEP_KINDS[args.param]
    if config.kind in SWEEP_KINDS.values():
        return config.kind
    raise ConfigError("sweep needs --param or a sweep_* experiment kind")


def _reference_policy(args: argparse.Namespace, config: ExperimentConfig) -> Optional[str]:
    text = getattr(args, "reference", None)
    if text is None:
        return None
    try:
        reference = format_policy(parse_policy(text))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if reference not in [format_policy(s) for s in config.policies.specs()]:
        raise ConfigError(f"reference policy {reference!r} is not among the configured policies")
    return reference


def run_command(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    fmt = config.output.format
    out = config.output.path
    if args.command == "simulate":
        rows = run_simulate(config)
        with _open_sink(out) as sink:
            write_rows(rows, sink, fmt)
    elif args.command == "sweep":
        reference = _reference_policy(args, config)
        rows = run_sweep(config, kind=_sweep_kind(args, config))
        if reference is not None:
            rows = improvement_table(rows, reference)
        with _open_sink(out) as sink:
            write_rows(rows, sink, fmt)
    elif args.command in ("select", "adapt"):
        report = run_select(config) if args.command == "select" else run_adapt_phases(config)
        if out is not None:
            with _open_sink(out) as sink:
                write_history(report, sink, fmt)
        write_rows(report.phase_leaders, sys.stdout, fmt)
    elif args.command == "oracle":
        rows = run_oracle(config)
        with _open_sink(out) as sink:
            write_rows(rows, sink, fmt)
    elif args.command == "synth-trace":
        spec = config.trace.synth
        if args.seed is not None:
            spec = spec.model_copy(update={"seed": args.seed})
        with _open_sink(out) as sink:
            dump_trace(synthesize_trace(spec), sink)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the `spotsched` command.

    Returns:
        int: 0 on success, 2 for configuration and input errors, 3 for runtime and capability errors.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        run_command(args)
    except (ConfigError, TraceParseError, TraceStructureError, ValidationError, FileNotFoundError) as e:
        logger.error("Configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SchedulerError as e:
        logger.error("Run failed: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected error")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
CLI entry point for the unique continuation lab
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ucplab.errors import (
    RICH_AVAILABLE,
    UCPLabError,
    ValidationError,
    console,
    error_config_file,
    error_generic,
)
from ucplab.harness import EXPERIMENTS, ExperimentConfig, load_config, report_summary, run
from ucplab.summary import FORMATS, SummaryRenderer

# Import Rich components for success messages (not errors)
if RICH_AVAILABLE:
    from rich.logging import RichHandler
    from rich.panel import Panel
    from rich.text import Text


# (flag, config key, argparse options) shared by every experiment subcommand
OVERRIDE_FLAGS = (
    ("--d", "d", {"type": int, "metavar": "D", "help": "Spatial dimension"}),
    ("--bc", "bc", {"choices": ["dirichlet", "periodic"], "help": "Boundary condition on the cube"}),
    ("--L", "L", {"type": float, "nargs": "+", "metavar": "L", "help": "Cube side length(s)"}),
    ("--delta", "delta", {"type": float, "nargs": "+", "metavar": "DELTA", "help": "Ball radius/radii in (0, 1/2)"}),
    ("--n", "n", {"type": int, "metavar": "N", "help": "Nodes per axis (overrides --resolution)"}),
    ("--resolution", "resolution", {"type": float, "metavar": "R", "help": "Nodes per unit length"}),
    ("--E", "E", {"type": float, "metavar": "E", "help": "Upper end of the energy window"}),
    ("--a", "a", {"type": float, "metavar": "A", "help": "Lower end of the energy window (default: -inf)"}),
    ("--K", "K", {"type": float, "metavar": "K", "help": "Potential bound ||V||_inf <= K"}),
    ("--potential", "potential", {"choices": ["zero", "constant", "sinusoidal", "random", "alloy"], "help": "Potential generator"}),
    ("--seeds", "seeds", {"type": int, "nargs": "+", "metavar": "SEED", "help": "Per-row seeds"}),
    ("--root-seed", "root_seed", {"type": int, "metavar": "SEED", "help": "Root of the seed tree"}),
    ("--arrangement", "arrangement", {"choices": ["periodic", "jitter"], "help": "Ball arrangement"}),
    ("--jitter-seed", "jitter_seed", {"type": int, "metavar": "SEED", "help": "Seed for jittered centers or sample nodes"}),
    ("--jitter-amp", "jitter_amp", {"type": float, "metavar": "T", "help": "Center jitter amplitude in [0, 1/2 - delta]"}),
    ("--bandwidth", "bandwidth", {"type": float, "nargs": "+", "metavar": "K", "help": "Shannon sampling bandwidth(s)"}),
    ("--truncation", "truncation", {"type": int, "metavar": "J", "help": "Shannon truncation |j| <= J"}),
    ("--jitter", "jitter", {"type": float, "metavar": "T", "help": "Shannon sample-node jitter amplitude"}),
    ("--noise", "noise", {"type": float, "metavar": "EPS", "help": "Shannon sample noise amplitude"}),
    ("--workers", "workers", {"type": int, "metavar": "N", "help": "Worker threads (default: UCPLAB_WORKERS or 1)"}),
)


def setup_logging(verbosity: int) -> None:
    """-v for INFO, -vv for DEBUG; warnings always."""
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    if RICH_AVAILABLE:
        handler = RichHandler(console=console, show_path=verbosity > 1, rich_tracebacks=True)
        logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=[handler], force=True)
    else:
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def parse_set_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError("--set takes KEY=VALUE", f"got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file, then command-line flags, then --set overrides, later ones winning."""
    values: Dict[str, Any] = {}
    if args.config:
        values.update(load_config(args.config))
    for _, key, _ in OVERRIDE_FLAGS:
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    values.update(parse_set_overrides(args.set or []))
    values["experiment"] = args.command
    if args.output:
        values["output"] = args.output
    return ExperimentConfig.from_mapping(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ucplab",
        description="Numerical experiments on unique continuation and spectral inequalities",
        epilog="""
Examples:
  # Uncertainty constant on a sweep of cube sizes
  ucplab sweep --L 1 3 5 --delta 0.2 --E 10 -o sweep.csv

  # Observability with a key=value config and one override
  ucplab observability -c sample_configs/sweep.cfg --set K=2

  # Worst-case ball positions
  ucplab adversarial --L 1 --delta 0.1 --E 15 -o worst.csv

  # Shannon sampling check for the Gaussian
  ucplab shannon --bandwidth 1 --truncation 200

  # Summarise sweeps as an HTML page
  ucplab summary sweep.csv -f html -o summary.html
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")

    experiment_options = argparse.ArgumentParser(add_help=False, parents=[common])
    experiment_options.add_argument(
        "-c",
        "--config",
        metavar="FILE",
        help="Configuration file: key = value lines, or JSON when the name ends in .json",
    )
    experiment_options.add_argument(
        "-o",
        "--output",
        metavar="FILE",
        help="Results CSV (default: <experiment>.csv)",
    )
    experiment_options.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Override one configuration key; may be repeated",
    )
    for flag, key, options in OVERRIDE_FLAGS:
        experiment_options.add_argument(flag, dest=key, default=None, **options)

    for name in EXPERIMENTS:
        subparsers.add_parser(name, parents=[experiment_options], help=f"Run the {name} experiment")

    summary = subparsers.add_parser("summary", parents=[common], help="Summarise results CSV files")
    summary.add_argument("inputs", nargs="+", metavar="CSV", help="Results files from sweep or observability")
    summary.add_argument(
        "-f",
        "--format",
        choices=list(FORMATS),
        default="markdown",
        help="Output format (default: markdown)",
    )
    summary.add_argument("-o", "--output", metavar="FILE", help="Write to FILE instead of standard output")
    return parser


def _print_success(title: str, lines: List[str]) -> None:
    if RICH_AVAILABLE:
        text = Text()
        for label, value in (line.split(": ", 1) for line in lines):
            text.append(f"{label}: ", style="bold")
            text.append(f"{value}\n", style="cyan")
        console.print(
            Panel(
                text,
                title=f"[bold green]{title}[/bold green]",
                border_style="green",
            )
        )
    else:
        for line in lines:
            print(f"✓ {line}")


def _run_summary(args: argparse.Namespace) -> int:
    table = report_summary(args.inputs)
    content = SummaryRenderer(table).render(args.format)
    if not args.output:
        print(content)
        return 0
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    Path(args.output).write_text(content, encoding="utf-8")
    _print_success(
        "Summary Generated",
        [f"Rows: {len(table.rows)}", f"Format: {args.format}", f"Output: {args.output}"],
    )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function to run an experiment or a summary."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        if args.command == "summary":
            return _run_summary(args)
        try:
            config = build_config(args)
        except (OSError, json.JSONDecodeError) as e:
            error_config_file(args.config, e)
            return 1
        result = run(config)
    except UCPLabError as e:
        error_generic(e)
        return 1

    lines = [f"Experiment: {config.experiment}", f"Rows: {result.rows}", f"Output: {result.path}"]
    if result.errors:
        lines.append(f"Failed rows: {result.errors} (see the error column)")
    lines.extend(f"Artifact: {path}" for path in result.extra_paths)
    _print_success("Experiment Finished", lines)
    return result.status


if __name__ == "__main__":
    exit(main())

"""Command line entry point: ``stvf run|study|list``.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 usage error,
3 numeric or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from .bochner import AssemblyError
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    convergence_study,
    emit,
    render,
    run_experiment,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_KEYS = ("T", "modes", "nt", "domain_lengths", "seed", "samples", "out", "format")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("experiment", help="experiment name (see `stvf list`)")
    p.add_argument("--config", help="flat JSON object with ExperimentConfig fields")
    p.add_argument("--T", type=float, help="final time")
    p.add_argument("--modes", type=int, help="number of spatial eigenmodes")
    p.add_argument("--nt", type=int, help="number of time elements")
    p.add_argument("--domain-lengths", type=float, nargs="+", dest="domain_lengths",
                   help="side lengths of the spatial box")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stvf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _add_common(run)

    study = sub.add_parser("study", help="rerun an experiment on a refinement ladder")
    _add_common(study)
    study.add_argument("--nt-doublings", type=int, default=1, dest="nt_doublings")
    study.add_argument("--mode-doublings", type=int, default=0, dest="mode_doublings")

    sub.add_parser("list", help="list the available experiments")
    return parser


def _load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = set(data) - set(CONFIG_KEYS) - {"experiment"}
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
    return data


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Flags override the config file; unset fields fall back to defaults."""
    values = _load_config_file(args.config) if args.config else {}
    values.pop("experiment", None)
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values.get("format") is None:
        values["format"] = "csv"
    return ExperimentConfig(args.experiment, **values)


def _print_summary(result) -> None:
    for name, passed in result.summary.items():
        status = "PASS" if passed else "FAIL"
        print(f"{status} {result.experiment}:{name} ({result.thresholds.get(name, '')})", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.command == "list":
        for name, exp in EXPERIMENTS.items():
            print(f"{name}\t{exp.description}")
        return EXIT_OK

    if args.experiment not in EXPERIMENTS:
        print(f"stvf: unknown experiment {args.experiment!r}; try `stvf list`", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = config_from_args(args)
        config.resolved()
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"stvf: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "study":
                result = convergence_study(config, args.nt_doublings, args.mode_doublings)
            else:
                result = run_experiment(config)
        if config.out:
            emit(result, config.out, config.format)
        else:
            sys.stdout.write(render(result, config.format))
    except (ArithmeticError, AssemblyError, np.linalg.LinAlgError, OSError) as exc:
        print(f"stvf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"stvf: {exc}", file=sys.stderr)
        return EXIT_USAGE

    _print_summary(result)
    return EXIT_OK if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

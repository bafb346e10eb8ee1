"""
Command-line entry point: `prefect-submodular <subcommand> [--flag value ...]`.
"""
import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from prefect.logging import get_logger

from prefect_submodular.checks import run_selftest
from prefect_submodular.config import ExperimentConfig, parse_bool
from prefect_submodular.exceptions import (
    MalformedValueException,
    MissingSubcommandException,
    SubmodularConfigurationException,
    SubmodularDataException,
    SubmodularSolverException,
    UnknownFlagException,
)
from prefect_submodular.tasks import (
    run_bounds,
    run_denoise,
    run_supervised,
    run_unsupervised,
)

SUBCOMMANDS = (
    "bounds",
    "train-supervised",
    "train-unsupervised",
    "denoise",
    "selftest",
)

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_UNKNOWN_FLAG = 2
EXIT_DATA_ERROR = 3
EXIT_SOLVER_ERROR = 4
EXIT_MALFORMED_VALUE = 5
EXIT_MISSING_SUBCOMMAND = 6

logger = get_logger("submodular.cli")


class _ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting, so that each usage error keeps its exit code."""

    def error(self, message: str):
        """Map argparse usage errors onto the exception hierarchy."""
        if "unrecognized arguments" in message:
            raise UnknownFlagException(message)
        if "invalid choice" in message:
            raise MissingSubcommandException(message)
        raise MalformedValueException(message)


def _build_parser() -> argparse.ArgumentParser:
    """One `--flag` per configuration field."""
    parser = _ArgumentParser(
        prog="prefect-submodular",
        description="Log-partition bounds and learning for log-supermodular models.",
        allow_abbrev=False,
    )
    parser.add_argument("command", nargs="?", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="Plain-text `key = value` configuration.")
    for name, parse in ExperimentConfig.PARSERS.items():
        flag = name.replace("_", "-")
        if parse is parse_bool:
            # bare `--flag` switches on, `--no-flag` off, `--flag VALUE` still parses
            parser.add_argument(f"--{flag}", dest=name, nargs="?", const="true")
            parser.add_argument(
                f"--no-{flag}", dest=name, action="store_const", const="false"
            )
        else:
            parser.add_argument(f"--{flag}", dest=name, metavar="VALUE")
    return parser


@dataclass(frozen=True)
class CliInvocation:
    """
    A parsed command line: subcommand, resolved configuration and where it came from.
    """

    command: str
    config: ExperimentConfig
    config_path: Optional[str] = None
    overrides: Dict[str, str] = field(default_factory=dict)


def parse_args(argv: Sequence[str]) -> CliInvocation:
    """
    Parse `argv`; flag values override the configuration file.

    Raises:
        - `UnknownFlagException` for a flag or key that is not a setting.
        - `MalformedValueException` for a value that does not parse or validate.
        - `MissingSubcommandException` if no known subcommand is given.
    """
    namespace = _build_parser().parse_args(list(argv))
    overrides = {
        name: value
        for name, value in vars(namespace).items()
        if name not in ("command", "config") and value is not None
    }
    base = ExperimentConfig.from_file(namespace.config) if namespace.config else None
    config = ExperimentConfig.from_mapping(overrides, base)
    if namespace.command is None:
        msg = f"Missing subcommand, expected one of {', '.join(SUBCOMMANDS)}."
        raise MissingSubcommandException(msg)
    return CliInvocation(
        command=namespace.command,
        config=config,
        config_path=namespace.config,
        overrides=overrides,
    )


def _selftest(config: ExperimentConfig) -> int:
    """Run the suites, print their tallies and return the exit code."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    config.write(out)
    results = run_selftest(config.seed)
    passed = sum(result.passed for result in results)
    failed = sum(result.failed for result in results)
    for result in results:
        print(f"{result.name}: {result.passed} passed, {result.failed} failed")
    print(f"selftest: {passed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_FAILED_CHECKS


def run(invocation: CliInvocation) -> int:
    """
    Dispatch a parsed invocation and return its exit code.

    Errors are not caught here; `main` maps them to exit codes.
    """
    config = invocation.config
    if invocation.command == "selftest":
        return _selftest(config)
    if invocation.command == "bounds":
        run_bounds(config)
    elif invocation.command == "train-supervised":
        run_supervised(config)
    elif invocation.command == "train-unsupervised":
        run_unsupervised(config)
    elif invocation.command == "denoise":
        run_denoise(config)
    print(f"Outputs written to {config.out}")
    return EXIT_OK


def exit_code(exc: Exception) -> int:
    """Exit code of an error raised while parsing or running."""
    if isinstance(exc, UnknownFlagException):
        return EXIT_UNKNOWN_FLAG
    if isinstance(exc, MissingSubcommandException):
        return EXIT_MISSING_SUBCOMMAND
    if isinstance(exc, SubmodularConfigurationException):
        return EXIT_MALFORMED_VALUE
    if isinstance(exc, SubmodularDataException):
        return EXIT_DATA_ERROR
    return EXIT_SOLVER_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    """
    Console entry point; returns the exit code instead of raising on usage,
    data and solver errors.
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_args(argv))
    except (
        SubmodularConfigurationException,
        SubmodularDataException,
        SubmodularSolverException,
    ) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())

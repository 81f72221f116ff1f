"""
Main entry point for the occupation-time verification toolkit.
`run` executes one experiment and writes its CSV report; `list` prints the experiments.
"""
import argparse
import logging
import sys
from typing import List, Optional

from config import (
    EXPERIMENT_DESCRIPTIONS,
    ExitCode,
    ExperimentId,
    LOG_LEVEL,
    TOOL_DESCRIPTION,
    TOOL_NAME,
)
from models.experiment import ExperimentConfig
from runner import run_verification
from utils.errors import ConfigurationError
from utils.validators import validate_experiment_id

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description=TOOL_DESCRIPTION)
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one experiment and write its report")
    run.add_argument("--experiment", required=True, help="experiment id (see `list`)")
    run.add_argument("--config", help="key=value configuration file")
    run.add_argument("--seed", help="master seed (mandatory here or in the config file)")
    run.add_argument("--workers", help="worker processes")
    run.add_argument("--tasks", help="task decomposition size")
    run.add_argument("--out", help="report path")
    run.add_argument("--ledger", help="SQLAlchemy URL of the results ledger")

    commands.add_parser("list", help="list experiment ids and the identity each checks")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Merge the config file with command-line overrides.

    Raises:
        ConfigurationError: Malformed file or invalid values
        OSError: Unreadable config file
    """
    ok, error = validate_experiment_id(args.experiment)
    if not ok:
        raise ConfigurationError(error)
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as handle:
            text = handle.read()
    overrides = {"workers": args.workers, "tasks": args.tasks, "output": args.out}
    lines = [f"{key}={value}" for key, value in overrides.items() if value is not None]
    text = text + ("\n" if text and not text.endswith("\n") else "") + "\n".join(lines)
    seed = args.seed
    if seed is not None:
        try:
            seed = int(seed)
        except ValueError:
            raise ConfigurationError(f"seed: '{seed}' is not an integer")
    return ExperimentConfig.from_text(text, experiment=args.experiment, seed=seed)


def list_experiments() -> None:
    for experiment in ExperimentId.ALL:
        print(f"{experiment:16s} {EXPERIMENT_DESCRIPTIONS[experiment]}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Returns:
        Exit code: 0 all pass, 2 any fail, 3 underpowered without fail, 1 usage or config error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitCode.OK if e.code == 0 else ExitCode.USAGE
    configure_logging(args.verbose)

    if args.command == "list":
        list_experiments()
        return ExitCode.OK

    try:
        config = load_config(args)
        _, code = run_verification(config, ledger_url=args.ledger)
        return code
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.USAGE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ExitCode.USAGE


if __name__ == '__main__':
    sys.exit(main())

import argparse
import sys
from typing import List, Optional

from src.commands import COMMANDS
from src.commands.common import EXIT_FAILURE, EXIT_USAGE, PlanFailed, global_options, output
from src.config import Config
from src.exceptions import (
    ContractViolationError,
    EquilibriumError,
    MagcapException,
    ScenarioParseError,
    ScenarioValidationError,
)
from src.services.logger import get_logger, setup_logging
from src.utils.report_builder import ReportBuilder

logger = get_logger(__name__)

_USAGE_ERRORS = (ScenarioParseError, ScenarioValidationError, EquilibriumError, ContractViolationError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=Config.TOOL_NAME, description=Config.TOOL_DESCRIPTION, parents=[global_options()]
    )
    parser.add_argument("--version", action="version", version=f"{Config.TOOL_NAME} {Config.TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [global_options(suppress_defaults=True)]
    for command in COMMANDS:
        command.register(subparsers, parents)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Exit codes:
        0: success
        1: runtime or solver failure (including non-converged plans and failed runs)
        2: usage, parse or validation error (including scenarios without an equilibrium start)
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, quiet=args.quiet)
    Config.validate()
    if args.workers < 1:
        parser.error("--workers must be >= 1")

    try:
        return args.func(args)
    except PlanFailed as e:
        report = e.result.report
        output(args, {"report": report.to_dict()}, ReportBuilder.solver(report, "source scenario"))
        return EXIT_FAILURE
    except MagcapException as e:
        code = EXIT_USAGE if isinstance(e, _USAGE_ERRORS) else EXIT_FAILURE
        logger.error(e.message)
        output(args, {"error": e.to_dict(), "exit_code": code}, ReportBuilder.error(e.to_dict()))
        return code
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        error = {"error_type": type(e).__name__, "message": str(e), "details": None}
        output(args, {"error": error, "exit_code": EXIT_FAILURE}, ReportBuilder.error(error))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

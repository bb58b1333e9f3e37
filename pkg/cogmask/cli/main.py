"""
Argument parsing and exit-code handling for the cogmask CLI
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from cogmask import __version__
from cogmask.cli.commands import COMMANDS
from cogmask.core.exceptions import CogMaskException, ConfigError, exit_code_for
from cogmask.core.instrumentation import configure_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogmask",
        description="Revealed-preference IRL and cognition masking for cognitive radars",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the selected subcommand; returns the process exit code"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except (CogMaskException, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())

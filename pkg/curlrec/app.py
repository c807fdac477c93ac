"""
curlrec command line application
"""
import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from cli.routes import register_commands
from config.solver_config import LOGGING_SETTINGS, VERSION
from models.exceptions import CurlRecError

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='curlrec',
        description='H0(curl) reconstruction and a posteriori estimation for the 2D IPDG curl-curl problem',
    )
    parser.add_argument('--version', action='version', version=f'curlrec {VERSION}')
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True
    register_commands(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOGGING_SETTINGS['level'], format=LOGGING_SETTINGS['format'])
    args = create_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CurlRecError as e:
        logger.error(f"{args.command} failed: {e}")
        return 2


if __name__ == '__main__':
    sys.exit(main())

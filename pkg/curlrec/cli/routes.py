"""
Main CLI Routes - Import and register all command groups
"""
import argparse
import logging

from cli.commands_pipeline import pipeline_commands
from cli.commands_study import study_commands
from cli.commands_verify import verify_commands
from cli.group import add_common_arguments

logger = logging.getLogger(__name__)

COMMAND_GROUPS = [pipeline_commands, study_commands, verify_commands]


def register_commands(subparsers) -> None:
    """
    Register every command of every group as a subcommand sharing the common flags
    """
    for group in COMMAND_GROUPS:
        for command in group.commands:
            parser = subparsers.add_parser(command['name'], help=command['help'])
            add_common_arguments(parser)
            for flags, options in command['arguments']:
                parser.add_argument(*flags, **options)
            parser.set_defaults(handler=command['handler'])
    logger.debug(f"Registered commands: {[c['name'] for g in COMMAND_GROUPS for c in g.commands]}")


__all__ = ['register_commands']

"""
Command groups: each cli module collects its commands in a group that routes.py registers
"""
import argparse
import logging
from typing import Any, Callable, Dict, List, Optional

from config.run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]

# argparse destination -> RunConfig field
OVERRIDES = {
    'mesh': 'mesh',
    'square': 'square',
    'lshape': 'lshape',
    'p': 'p',
    'q': 'q',
    'omega': 'omega',
    'eps': 'eps',
    'nu': 'nu',
    'eta_star': 'eta_star',
    'levels': 'levels',
    'theta': 'theta',
    'p_max': 'p_max',
    'problem': 'problem',
    'seed': 'seed',
    'out': 'out',
    'field': 'field',
    'debug_flip_orientation': 'flip_orientation',
}


class CommandGroup:
    def __init__(self, name: str):
        self.name = name
        self.commands: List[Dict[str, Any]] = []

    def command(self, name: str, help: str, arguments: Optional[List[tuple]] = None):
        """Decorator registering a handler under a subcommand name"""
        def decorator(handler: Handler) -> Handler:
            self.commands.append({'name': name, 'help': help, 'handler': handler,
                                  'arguments': arguments or []})
            return handler
        return decorator


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every command; None means 'not given' so file values survive"""
    source = parser.add_argument_group('mesh')
    source.add_argument('--mesh', help='plain-text mesh file')
    source.add_argument('--square', type=int, metavar='N', help='uniform N x N mesh of the unit square')
    source.add_argument('--lshape', type=int, metavar='N', help='uniform L-shaped mesh, N x N squares per unit square')
    numerics = parser.add_argument_group('discretization')
    numerics.add_argument('--p', type=int, help='dG polynomial degree')
    numerics.add_argument('--q', type=int, help='reconstruction degree (>= p+1, default p+2)')
    numerics.add_argument('--omega', type=float, help='frequency')
    numerics.add_argument('--eps', help="eps value or 'base | x0:x1,y0:y1=value'")
    numerics.add_argument('--nu', help="nu value or 'base | x0:x1,y0:y1=value'")
    numerics.add_argument('--eta-star', dest='eta_star', help="penalty parameter or 'auto'")
    numerics.add_argument('--problem', help='manufactured problem: polynomial, trig or lshape')
    study = parser.add_argument_group('studies')
    study.add_argument('--levels', type=int, help='refinement levels or adaptive iterations')
    study.add_argument('--theta', type=float, help='Doerfler marking fraction in (0, 1]')
    study.add_argument('--p-max', dest='p_max', type=int, help='largest degree of the p-study')
    study.add_argument('--seed', type=int, help='seed for random sampling')
    output = parser.add_argument_group('input/output')
    output.add_argument('--out', metavar='DIR', help='output directory')
    output.add_argument('--config', metavar='FILE', help='key = value configuration file')
    output.add_argument('--field', metavar='FILE', help='broken field file to use instead of solving')
    parser.add_argument('--debug-flip-orientation', dest='debug_flip_orientation', action='store_const',
                        const=True, default=None, help=argparse.SUPPRESS)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {field: getattr(args, dest, None) for dest, field in OVERRIDES.items()}
    overrides['command'] = args.command
    return load_run_config(getattr(args, 'config', None), overrides)

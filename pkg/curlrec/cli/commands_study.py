"""
Study commands: study-h, study-p, adapt
"""
import logging

from cli.group import CommandGroup, config_from_args
from services.report_service import export_table
from services.study_service import StudyService, growth_exponents

logger = logging.getLogger(__name__)

study_commands = CommandGroup('study')


@study_commands.command('study-h', help='uniform h-refinement study with rates and bound ratios')
def cmd_study_h(args) -> int:
    config = config_from_args(args)
    frame = StudyService(config).study_h()
    export_table(frame, config.out, 'study_h.csv', config.echo())
    if 'rate_err' in frame:
        logger.info(f"Final error rate {frame['rate_err'].iloc[-1]:.3f}, estimator rate {frame['rate_eta'].iloc[-1]:.3f}")
    return 0


@study_commands.command('study-p', help='p = 1..p_max sweep on a fixed mesh with growth exponents')
def cmd_study_p(args) -> int:
    config = config_from_args(args)
    frame = StudyService(config).study_p()
    fits = growth_exponents(frame)
    export_table(frame, config.out, 'study_p.csv', {**config.echo(), 'growth_exponents': fits})
    for column, exponent in fits.items():
        logger.info(f"Growth exponent of {column}: {exponent:.3f}")
    return 0


@study_commands.command('adapt', help='adaptive loop with Doerfler marking on eta_K')
def cmd_adapt(args) -> int:
    config = config_from_args(args)
    frame = StudyService(config).adapt()
    export_table(frame, config.out, 'adapt.csv', config.echo())
    return 0

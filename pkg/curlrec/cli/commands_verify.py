"""
Verification command: runs the oracle suite and fails when any oracle fails
"""
import logging

from cli.group import CommandGroup, config_from_args
from services.report_service import export_table
from services.verification_service import VerificationService

logger = logging.getLogger(__name__)

verify_commands = CommandGroup('verify')


@verify_commands.command('verify', help='run the verification oracle suite')
def cmd_verify(args) -> int:
    config = config_from_args(args)
    frame = VerificationService(config).run()
    export_table(frame, config.out, 'verify.csv', config.echo())
    failed = frame.loc[~frame['passed'], 'oracle'].tolist()
    if failed:
        logger.error(f"Verification failed: {', '.join(failed)}")
        return 1
    logger.info(f"All {len(frame)} oracles passed")
    return 0

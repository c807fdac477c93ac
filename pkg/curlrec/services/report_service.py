"""
CSV export of result tables: header row, data rows, trailing metadata comment line
"""
import json
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd

from config.solver_config import OUTPUT_SETTINGS, VERSION

logger = logging.getLogger(__name__)


def metadata_line(config_echo: Optional[Dict[str, Any]] = None) -> str:
    payload = {'version': VERSION, 'config': config_echo or {}}
    return '# ' + json.dumps(payload, sort_keys=True, default=str)


def format_table(frame: pd.DataFrame, config_echo: Optional[Dict[str, Any]] = None) -> str:
    body = frame.to_csv(index=False, float_format=OUTPUT_SETTINGS['float_format'], lineterminator='\n')
    return body + metadata_line(config_echo) + '\n'


def export_table(frame: pd.DataFrame, output_dir: str, filename: str,
                 config_echo: Optional[Dict[str, Any]] = None) -> str:
    """Write one table to output_dir/filename and return the path"""
    if not os.path.exists(output_dir):
        os.makedirs(output_dir)
    path = os.path.join(output_dir, filename)
    with open(path, 'w') as handle:
        handle.write(format_table(frame, config_echo))
    logger.info(f"Exported {len(frame)} rows to {path}")
    return path


def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment='#')

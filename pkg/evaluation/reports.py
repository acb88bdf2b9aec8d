import json
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def write_report(path, report):
    """Write `report` as JSON (indent 2, sorted keys)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(report), indent=2, sort_keys=True) + '\n')
    logger.info('Wrote report %s', path)
    return path


def write_table(path, frame):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info('Wrote table %s (%d rows)', path, len(frame))
    return path

"""
Report export

CSV writes one file per table; JSON writes a single report.json with sorted
keys. Floats carry 6 decimals in both formats, so exporting the same report
twice gives byte-identical files.
"""
import json
import logging
from enum import Enum
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from sim_errors import IoFailure
from .metrics import MetricsReport

logger = logging.getLogger(__name__)

FLOAT_DECIMALS = 6
JSON_FILE = "report.json"


class ExportFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


@retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.2, min=0.2, max=2),
    retry=retry_if_exception_type(OSError),
    reraise=True,
)
def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="UTF-8", newline="") as f:
        f.write(text)


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=f"%.{FLOAT_DECIMALS}f", lineterminator="\n")


def _json_value(value):
    if isinstance(value, (list, tuple)):
        return [_json_value(item) for item in value]
    if value is None or value is pd.NA:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if np.isnan(value) else round(float(value), FLOAT_DECIMALS)
    return value


def frame_records(frame: pd.DataFrame) -> List[dict]:
    return [{column: _json_value(value) for column, value in row.items()}
            for row in frame.astype(object).to_dict(orient="records")]


def report_to_json(report: MetricsReport) -> str:
    payload = {
        "scenario": {key: _json_value(value) for key, value in report.scenario.items()},
        "tables": {name: frame_records(frame) for name, frame in report.tables().items()},
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def export(report: MetricsReport, fmt: Union[ExportFormat, str], path: Union[str, Path]) -> List[Path]:
    """
    Write a report under a directory

    Args:
        report: Report to write
        fmt: 'csv' or 'json'
        path: Output directory (created if missing)

    Returns:
        List[Path]: Files written

    Raises:
        IoFailure: A file could not be written after retries
    """
    fmt = ExportFormat(fmt)
    path = Path(path)
    written = []
    try:
        if fmt is ExportFormat.CSV:
            for name, frame in report.tables().items():
                target = path / f"{name}.csv"
                _write_text(target, frame_to_csv(frame))
                written.append(target)
        else:
            target = path / JSON_FILE
            _write_text(target, report_to_json(report))
            written.append(target)
    except OSError as e:
        logger.error(f"Report export to {path} failed: {e}")
        raise IoFailure(f"could not write report under {path}: {e}") from e

    logger.info(f"Report written: {len(written)} {fmt.value} file(s) under {path}")
    return written

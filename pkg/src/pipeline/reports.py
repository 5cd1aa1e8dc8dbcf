"""
Run reports: one deterministic JSON document per command (sorted keys,
no timestamps) plus dataset fingerprints.
"""

import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from src.features.tables import write_table

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if hasattr(value, "model_dump"):
        return to_jsonable(value.model_dump())
    return value


def fingerprint(frame: pd.DataFrame, label_column: Optional[str] = None) -> Dict[str, Any]:
    """Row count, optional positive share and SHA-256 of the canonical CSV."""
    buffer = io.StringIO()
    write_table(frame, buffer)
    digest = hashlib.sha256(buffer.getvalue().encode("utf-8")).hexdigest()
    result: Dict[str, Any] = {"rows": int(len(frame)), "sha256": digest}
    if label_column is not None and label_column in frame.columns and len(frame):
        result["positive_share"] = float((frame[label_column] > 0).mean())
    return result


def render_report(report: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: Dict[str, Any], out_dir: Union[str, Path], name: str = REPORT_NAME) -> Path:
    """Write the report into the output directory and return its path."""
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(report), encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path

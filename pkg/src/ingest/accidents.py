"""
Parser for the canonical accident CSV.

Columns: id,date,time,lon,lat,vehicle1..vehicle5,injured,killed
(vehicle columns optional, cells may be empty). Dates are YYYY-MM-DD and
times HH:MM, both local civil time.
"""

import logging
import datetime
from dataclasses import dataclass
from typing import List, TextIO, Tuple, Union
from os import PathLike

import pandas as pd

from src.geo.geometry import GeoPoint
from src.ingest.report import IngestError, IngestReport, ReportBuilder

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["id", "date", "time", "lon", "lat", "injured", "killed"]
CANONICAL_VEHICLE_COLUMNS = [f"vehicle{i}" for i in range(1, 6)]
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"

Source = Union[str, PathLike, TextIO]


@dataclass(frozen=True)
class AccidentRecord:
    """One collision event."""
    id: str
    location: GeoPoint
    timestamp: datetime.datetime
    vehicle_types: Tuple[str, ...]
    injured: int
    killed: int


class _RowRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _vehicle_columns(columns: List[str]) -> List[str]:
    found = [c for c in columns if c.startswith("vehicle") and c[len("vehicle"):].isdigit()]
    return sorted(found, key=lambda c: int(c[len("vehicle"):]))


def _parse_count(raw: str) -> int:
    try:
        value = int(raw.strip())
    except ValueError:
        raise _RowRejected("bad_count")
    if value < 0:
        raise _RowRejected("negative_count")
    return value


def _parse_row(row: dict, vehicle_cols: List[str]) -> AccidentRecord:
    record_id = row["id"].strip()
    if not record_id:
        raise _RowRejected("missing_id")

    lon_raw, lat_raw = row["lon"].strip(), row["lat"].strip()
    if not lon_raw or not lat_raw:
        raise _RowRejected("missing_coordinates")
    try:
        lon, lat = float(lon_raw), float(lat_raw)
        location = GeoPoint(lon, lat)
    except ValueError:
        raise _RowRejected("bad_coordinates")
    # (0, 0) is the open-data placeholder for "unknown"
    if lon == 0.0 and lat == 0.0:
        raise _RowRejected("zero_coordinates")

    try:
        timestamp = datetime.datetime.strptime(
            f"{row['date'].strip()} {row['time'].strip()}", TIMESTAMP_FORMAT
        )
    except ValueError:
        raise _RowRejected("bad_timestamp")

    injured = _parse_count(row["injured"])
    killed = _parse_count(row["killed"])
    vehicles = tuple(row[c].strip() for c in vehicle_cols if row[c].strip())

    return AccidentRecord(
        id=record_id,
        location=location,
        timestamp=timestamp,
        vehicle_types=vehicles,
        injured=injured,
        killed=killed,
    )


def parse_accidents(
    source: Source,
    strict: bool = False
) -> Tuple[List[AccidentRecord], IngestReport]:
    """
    Parse accident records, rejecting invalid rows.

    Args:
        source: Path or text stream holding the CSV
        strict: Turn the first rejected row into a fatal error

    Returns:
        Tuple of (records in file order, ingest report)

    Raises:
        IngestError: missing required columns, unreadable file, or any
            rejected row when strict is set
    """
    # rows with more fields than the header are set aside, not fatal
    long_rows: List[List[str]] = []

    def _collect(fields: List[str]) -> None:
        long_rows.append(fields)
        return None

    try:
        frame = pd.read_csv(
            source, dtype=str, keep_default_na=False, skipinitialspace=False,
            engine="python", on_bad_lines=_collect,
        )
    except pd.errors.EmptyDataError:
        raise IngestError("accident file is empty (header row required)")
    except pd.errors.ParserError as e:
        raise IngestError(f"malformed accident CSV: {e}")

    frame = frame.fillna("")
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")

    vehicle_cols = _vehicle_columns(list(frame.columns))
    builder = ReportBuilder("accidents")
    records: List[AccidentRecord] = []

    if long_rows:
        if strict:
            first_id = long_rows[0][0] if long_rows[0] else ""
            raise IngestError(
                f"malformed_row: id '{first_id}' has {len(long_rows[0])} fields, "
                f"header has {len(frame.columns)}"
            )
        for fields in long_rows:
            builder.reject("malformed_row")
            logger.debug(f"accident row with {len(fields)} fields rejected: malformed_row")

    for i, row in enumerate(frame.to_dict(orient="records"), start=1):
        try:
            records.append(_parse_row(row, vehicle_cols))
            builder.accept()
        except _RowRejected as rejected:
            if strict:
                raise IngestError(rejected.reason, row=i)
            builder.reject(rejected.reason)
            logger.debug(f"accident row {i} rejected: {rejected.reason}")

    return records, builder.build()


def accidents_to_frame(records: List[AccidentRecord]) -> pd.DataFrame:
    """Canonical tabular form of accident records (column order fixed)."""
    n_vehicle = max([len(CANONICAL_VEHICLE_COLUMNS)] + [len(r.vehicle_types) for r in records])
    vehicle_cols = [f"vehicle{i}" for i in range(1, n_vehicle + 1)]
    rows = []
    for r in records:
        row = {
            "id": r.id,
            "date": r.timestamp.strftime("%Y-%m-%d"),
            "time": r.timestamp.strftime("%H:%M"),
            "lon": repr(r.location.lon),
            "lat": repr(r.location.lat),
        }
        for j, col in enumerate(vehicle_cols):
            row[col] = r.vehicle_types[j] if j < len(r.vehicle_types) else ""
        row["injured"] = str(r.injured)
        row["killed"] = str(r.killed)
        rows.append(row)
    columns = ["id", "date", "time", "lon", "lat", *vehicle_cols, "injured", "killed"]
    return pd.DataFrame(rows, columns=columns)


def write_accidents(records: List[AccidentRecord], target: Source) -> None:
    """Serialise records to the canonical CSV; re-parsing yields equal records."""
    accidents_to_frame(records).to_csv(target, index=False, lineterminator="\n")


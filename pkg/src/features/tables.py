"""
Model-ready tables.

Aggregated table (one row per tract), column order fixed:
    tract_id, complexity, avg_street_width_m, avg_bike_lanes,
    avg_node_degree, centroid_x, centroid_y, y
Point table (one row per accident inside a covered tract):
    accident_id, tract_id, hour, day_of_week, vehicle_<category> x 7,
    complexity, avg_street_width_m, avg_bike_lanes, avg_node_degree, label
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.features.labels import severity_label, temporal_features, vehicle_categories, vehicle_one_hot
from src.geo.geometry import GeoPoint, points_in_polygon, project_arrays
from src.ingest.accidents import AccidentRecord
from src.ingest.tracts import CensusTract
from src.network.metrics import TractNetworkSummary

logger = logging.getLogger(__name__)

SPATIAL_FEATURES = ["complexity", "avg_street_width_m", "avg_bike_lanes", "avg_node_degree"]
AGGREGATED_COLUMNS = ["tract_id", *SPATIAL_FEATURES, "centroid_x", "centroid_y", "y"]
CENTROID_COLUMNS = ["centroid_x", "centroid_y"]
VEHICLE_COLUMNS = [f"vehicle_{c}" for c in vehicle_categories()]
POINT_FEATURES = ["hour", "day_of_week", *VEHICLE_COLUMNS, *SPATIAL_FEATURES]
POINT_COLUMNS = ["accident_id", "tract_id", *POINT_FEATURES, "label"]

TABLE_DTYPES = {"tract_id": str, "accident_id": str}


class FeatureCoverage(BaseModel):
    """Where accidents and tracts went while building a table."""
    accidents_total: int
    accidents_outside_tracts: int
    accidents_in_dropped_tracts: int
    rows: int
    tracts_total: int
    tracts_dropped: int
    positive_share_input: Optional[float]
    positive_share_table: Optional[float]


def assign_to_tracts(accidents: Sequence[AccidentRecord], tracts: Sequence[CensusTract]) -> np.ndarray:
    """
    Tract index for every accident (-1 when outside all tracts).

    Boundary points count as inside; an accident on a shared boundary goes
    to the tract with the lowest id.
    """
    lons = np.array([a.location.lon for a in accidents], dtype=float)
    lats = np.array([a.location.lat for a in accidents], dtype=float)
    assigned = np.full(len(accidents), -1, dtype=int)
    if not len(accidents):
        return assigned

    for j in sorted(range(len(tracts)), key=lambda k: tracts[k].tract_id):
        xmin, ymin, xmax, ymax = tracts[j].bounds
        open_idx = np.flatnonzero(
            (assigned < 0) & (lons >= xmin) & (lons <= xmax) & (lats >= ymin) & (lats <= ymax)
        )
        # Bounding box first, then exact test per part
        for part in tracts[j].geometry:
            if not len(open_idx):
                break
            hit = points_in_polygon(lons[open_idx], lats[open_idx], part)
            assigned[open_idx[hit]] = j
            open_idx = open_idx[~hit]
    return assigned


def dataset_reference(tracts: Sequence[CensusTract]) -> GeoPoint:
    """Projection reference: mean of tract centroids."""
    return GeoPoint(
        float(np.mean([t.centroid.lon for t in tracts])),
        float(np.mean([t.centroid.lat for t in tracts])),
    )


def _valid_summaries(
    tracts: Sequence[CensusTract],
    summaries: Sequence[TractNetworkSummary]
) -> Dict[str, TractNetworkSummary]:
    by_id = {s.tract_id: s for s in summaries}
    valid = {}
    for t in tracts:
        s = by_id.get(t.tract_id)
        if s is None or s.empty:
            continue
        if any(getattr(s, f) is None or not np.isfinite(getattr(s, f)) for f in SPATIAL_FEATURES):
            continue
        valid[t.tract_id] = s
    return valid


def _share(labels) -> Optional[float]:
    labels = list(labels)
    return float(np.mean(labels)) if labels else None


def build_aggregated(
    accidents: Sequence[AccidentRecord],
    tracts: Sequence[CensusTract],
    summaries: Sequence[TractNetworkSummary]
) -> Tuple[pd.DataFrame, FeatureCoverage]:
    """
    Tract-level regression table: severe-accident count y per tract plus
    the tract's network features and projected centroid.

    Tracts without a complete network summary are dropped and counted.

    Raises:
        ValueError: if no tracts are given
    """
    if not tracts:
        raise ValueError("no tracts")

    # Count severe accidents per tract
    assigned = assign_to_tracts(accidents, tracts)
    labels = np.array([severity_label(a) for a in accidents], dtype=int)
    severe_counts = np.bincount(assigned[assigned >= 0], weights=labels[assigned >= 0], minlength=len(tracts))

    # Project centroids around the mean centroid
    valid = _valid_summaries(tracts, summaries)
    ref = dataset_reference(tracts)
    cx, cy = project_arrays([t.centroid.lon for t in tracts], [t.centroid.lat for t in tracts], ref)

    rows = []
    kept = np.zeros(len(tracts), dtype=bool)
    for j, t in enumerate(tracts):
        s = valid.get(t.tract_id)
        if s is None:
            continue
        kept[j] = True
        rows.append([
            t.tract_id, s.complexity, s.avg_street_width_m, s.avg_bike_lanes, s.avg_node_degree,
            float(cx[j]), float(cy[j]), int(severe_counts[j]),
        ])

    frame = pd.DataFrame(rows, columns=AGGREGATED_COLUMNS)
    frame["y"] = frame["y"].astype(int)
    in_kept = (assigned >= 0) & kept[np.maximum(assigned, 0)]
    coverage = FeatureCoverage(
        accidents_total=len(accidents),
        accidents_outside_tracts=int(np.sum(assigned < 0)),
        accidents_in_dropped_tracts=int(np.sum((assigned >= 0) & ~in_kept)),
        rows=len(frame),
        tracts_total=len(tracts),
        tracts_dropped=len(tracts) - len(frame),
        positive_share_input=_share(labels),
        positive_share_table=_share(labels[in_kept]),
    )
    logger.info(
        f"Aggregated table: {coverage.rows} tracts ({coverage.tracts_dropped} dropped), "
        f"{coverage.accidents_outside_tracts} accidents outside every tract"
    )
    return frame, coverage


def build_point(
    accidents: Sequence[AccidentRecord],
    tracts: Sequence[CensusTract],
    summaries: Sequence[TractNetworkSummary]
) -> Tuple[pd.DataFrame, FeatureCoverage]:
    """
    Accident-level classification table, one row per accident that falls
    in a tract with a complete network summary, in input order.
    """
    assigned = assign_to_tracts(accidents, tracts) if tracts else np.full(len(accidents), -1)
    valid = _valid_summaries(tracts, summaries)

    rows = []
    dropped_tract = 0
    labels_in = []
    for a, j in zip(accidents, assigned):
        label = severity_label(a)
        labels_in.append(label)
        if j < 0:
            continue
        s = valid.get(tracts[j].tract_id)
        if s is None:
            dropped_tract += 1
            continue
        hour, dow = temporal_features(a.timestamp)
        flags = vehicle_one_hot(a.vehicle_types)
        rows.append([
            a.id, tracts[j].tract_id, hour, dow,
            *[flags[c] for c in vehicle_categories()],
            *[getattr(s, f) for f in SPATIAL_FEATURES],
            label,
        ])

    frame = pd.DataFrame(rows, columns=POINT_COLUMNS)
    coverage = FeatureCoverage(
        accidents_total=len(accidents),
        accidents_outside_tracts=int(np.sum(assigned < 0)),
        accidents_in_dropped_tracts=dropped_tract,
        rows=len(frame),
        tracts_total=len(tracts),
        tracts_dropped=len(tracts) - len(valid),
        positive_share_input=_share(labels_in),
        positive_share_table=_share(frame["label"]) if len(frame) else None,
    )
    share = coverage.positive_share_table
    logger.info(
        f"Point table: {coverage.rows} rows, positive share "
        f"{'n/a' if share is None else f'{share:.3f}'} (input {coverage.positive_share_input})"
    )
    return frame, coverage


def temporal_profile(accidents: Sequence[AccidentRecord]) -> pd.DataFrame:
    """Accident and severe-accident counts by hour of day and day of week."""
    rows = []
    for a in accidents:
        hour, dow = temporal_features(a.timestamp)
        rows.append((hour, dow, severity_label(a)))
    frame = pd.DataFrame(rows, columns=["hour", "day_of_week", "severe"])
    index = pd.MultiIndex.from_product([range(24), range(7)], names=["hour", "day_of_week"])
    grouped = frame.groupby(["hour", "day_of_week"])["severe"].agg(["count", "sum"])
    profile = grouped.reindex(index, fill_value=0).reset_index()
    return profile.rename(columns={"count": "accidents", "sum": "severe_accidents"})


def write_table(frame: pd.DataFrame, target) -> None:
    """CSV export with fixed column order; floats written at full precision."""
    frame.to_csv(target, index=False, lineterminator="\n")


def read_table(source, required: Sequence[str]) -> pd.DataFrame:
    """
    Re-import a table written by `write_table`.

    Raises:
        ValueError: naming the first missing required column
    """
    frame = pd.read_csv(source, dtype=TABLE_DTYPES)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValueError(f"missing column {missing[0]!r}" + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return frame


def feature_matrix(frame: pd.DataFrame, columns: List[str]) -> np.ndarray:
    return frame[columns].to_numpy(dtype=float)

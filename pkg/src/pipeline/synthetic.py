"""
Seeded synthetic cities and model-ready tables with planted structure.

The city generator lays out a square grid of tracts, a small street
lattice inside every tract and accidents whose per-tract severe count
follows a planted linear effect of the tract's network features plus a
Gaussian-Process spatial field. The table generators skip geometry and
draw features directly with moments close to the published NYC
summaries.
"""

import datetime
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.linalg import cholesky
from scipy.optimize import brentq
from scipy.special import expit

from src.features.labels import vehicle_categories
from src.features.tables import POINT_COLUMNS, SPATIAL_FEATURES, build_aggregated, build_point, write_table
from src.geo.geometry import GeoPoint, PolygonGeom, unproject_arrays
from src.ingest.accidents import AccidentRecord, write_accidents
from src.ingest.network import StreetEdge, StreetNetwork, write_network
from src.ingest.tracts import CensusTract, make_tract, write_tracts
from src.learners.gaussian_process import rbf_matrix
from src.network.metrics import summarize_tracts

logger = logging.getLogger(__name__)

# (mean, std) of tract features in the reference city
FEATURE_MOMENTS: Dict[str, Tuple[float, float]] = {
    "complexity": (30.58, 39.34),
    "avg_street_width_m": (34.13, 5.85),
    "avg_bike_lanes": (1.47, 1.35),
    "avg_node_degree": (3.59, 0.83),
}

DEFAULT_EFFECTS = {
    "complexity": 0.8,
    "avg_street_width_m": -0.3,
    "avg_bike_lanes": -0.2,
    "avg_node_degree": 0.4,
}

# Raw strings as they appear in police reports, one or more per category
RAW_VEHICLES = {
    "car": ["Sedan", "Station Wagon/Sport Utility Vehicle"],
    "two_wheeler": ["Motorcycle", "Moped"],
    "truck": ["Box Truck", "Pick-up Truck"],
    "bus": ["Bus"],
    "taxi": ["Taxi"],
    "bicycle": ["Bike"],
    "other": ["Ambulance"],
}


class SyntheticSpec(BaseModel):
    grid_rows: int = Field(default=24, ge=2)
    grid_cols: int = Field(default=24, ge=2)
    tract_size_m: float = Field(default=500.0, gt=0)
    origin_lon: float = Field(default=-73.95, ge=-180, le=180)
    origin_lat: float = Field(default=40.72, ge=-80, le=80)
    # standardised-feature coefficients of the planted signal
    effects: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_EFFECTS))
    spatial_lengthscale_m: float = Field(default=1500.0, gt=0)
    spatial_amplitude: float = Field(default=1.0, ge=0)
    noise_sd: float = Field(default=0.3, ge=0)
    count_base: float = Field(default=8.0, ge=0)
    count_scale: float = Field(default=3.0, ge=0)
    # square block of tracts at the grid centre whose signal is raised
    hotspot_size: int = Field(default=0, ge=0)
    hotspot_boost: float = 0.0
    positive_rate: float = Field(default=0.23, gt=0, lt=1)
    n_points: int = Field(default=4000, ge=10)
    point_signal: float = Field(default=1.0, ge=0)
    seed: int = Field(default=0, ge=0)

    @field_validator("effects")
    @classmethod
    def _known_features(cls, effects: Dict[str, float]) -> Dict[str, float]:
        unknown = sorted(set(effects) - set(SPATIAL_FEATURES))
        if unknown:
            raise ValueError(f"unknown feature effects: {unknown}")
        return effects

    @model_validator(mode="after")
    def _hotspot_fits(self) -> "SyntheticSpec":
        if self.hotspot_size > min(self.grid_rows, self.grid_cols):
            raise ValueError("hotspot larger than the grid")
        return self

    @property
    def n_tracts(self) -> int:
        return self.grid_rows * self.grid_cols


@dataclass
class SyntheticCity:
    tracts: List[CensusTract]
    network: StreetNetwork
    accidents: List[AccidentRecord]
    signal: np.ndarray
    spatial_field: np.ndarray


def tract_id(row: int, col: int) -> str:
    return f"T{row:03d}{col:03d}"


def tract_centers(spec: SyntheticSpec) -> np.ndarray:
    """Tract centres in meters around the grid centre, row-major order."""
    rows, cols = np.meshgrid(np.arange(spec.grid_rows), np.arange(spec.grid_cols), indexing="ij")
    x = (cols.ravel() + 0.5 - spec.grid_cols / 2.0) * spec.tract_size_m
    y = (rows.ravel() + 0.5 - spec.grid_rows / 2.0) * spec.tract_size_m
    return np.column_stack([x, y])


def hotspot_mask(spec: SyntheticSpec) -> np.ndarray:
    mask = np.zeros((spec.grid_rows, spec.grid_cols), dtype=bool)
    if spec.hotspot_size:
        r0 = (spec.grid_rows - spec.hotspot_size) // 2
        c0 = (spec.grid_cols - spec.hotspot_size) // 2
        mask[r0:r0 + spec.hotspot_size, c0:c0 + spec.hotspot_size] = True
    return mask.ravel()


def spatial_field(rng: np.random.Generator, centers: np.ndarray, lengthscale: float, amplitude: float) -> np.ndarray:
    """One draw of a zero-mean GP with RBF covariance and unit variance, scaled by amplitude."""
    e = rng.standard_normal(len(centers))
    if amplitude == 0:
        return np.zeros(len(centers))
    K = rbf_matrix(centers, centers, 1.0, lengthscale)
    L = cholesky(K + 1e-6 * np.eye(len(K)), lower=True)
    return amplitude * (L @ e)


def _gamma(rng: np.random.Generator, mean: float, std: float, size) -> np.ndarray:
    shape = (mean / std) ** 2
    return rng.gamma(shape, std ** 2 / mean, size=size)


def draw_features(rng: np.random.Generator, n: int) -> Dict[str, np.ndarray]:
    """Tract features with the reference means and standard deviations."""
    return {
        "complexity": _gamma(rng, *FEATURE_MOMENTS["complexity"], n),
        "avg_street_width_m": np.maximum(rng.normal(*FEATURE_MOMENTS["avg_street_width_m"], n), 1.0),
        "avg_bike_lanes": _gamma(rng, *FEATURE_MOMENTS["avg_bike_lanes"], n),
        "avg_node_degree": np.maximum(rng.normal(*FEATURE_MOMENTS["avg_node_degree"], n), 1.0),
    }


def planted_signal(spec: SyntheticSpec, features: Dict[str, np.ndarray]) -> np.ndarray:
    """Sum of effect * z-scored feature."""
    n = len(next(iter(features.values())))
    signal = np.zeros(n)
    for name, effect in spec.effects.items():
        values = np.asarray(features[name], dtype=float)
        sd = values.std()
        if sd > 0:
            signal += effect * (values - values.mean()) / sd
    return signal


def _counts(spec: SyntheticSpec, rng: np.random.Generator, signal: np.ndarray, field: np.ndarray) -> np.ndarray:
    noise = spec.noise_sd * rng.standard_normal(len(signal))
    latent = signal + field + noise + spec.hotspot_boost * hotspot_mask(spec)
    return np.maximum(np.round(spec.count_base + spec.count_scale * latent), 0).astype(int)


def generate_aggregated_table(spec: SyntheticSpec) -> pd.DataFrame:
    """
    Model-ready tract table in row-major grid order (lattice_queen(rows,
    cols) indexes it directly).
    """
    rng = np.random.default_rng([spec.seed, 1])
    centers = tract_centers(spec)
    features = draw_features(rng, spec.n_tracts)
    field = spatial_field(rng, centers, spec.spatial_lengthscale_m, spec.spatial_amplitude)
    y = _counts(spec, rng, planted_signal(spec, features), field)

    ids = [tract_id(r, c) for r in range(spec.grid_rows) for c in range(spec.grid_cols)]
    frame = pd.DataFrame({
        "tract_id": ids,
        **{name: features[name] for name in SPATIAL_FEATURES},
        "centroid_x": centers[:, 0],
        "centroid_y": centers[:, 1],
        "y": y,
    })
    logger.info(f"Synthetic aggregated table: {len(frame)} tracts, mean count {y.mean():.2f}")
    return frame


def _intercept_for_rate(score: np.ndarray, rate: float) -> float:
    return brentq(lambda a: float(expit(a + score).mean()) - rate, -50.0, 50.0, xtol=1e-12)


def generate_point_table(spec: SyntheticSpec) -> pd.DataFrame:
    """
    Model-ready accident table with a nonlinear planted boundary.

    The severity logit rises when complexity and street width are both
    above or both below their medians (an interaction a linear model
    cannot express), for two-wheelers and at night. The intercept is
    solved so the expected positive share equals spec.positive_rate.
    """
    rng = np.random.default_rng([spec.seed, 2])
    n = spec.n_points
    categories = vehicle_categories()
    hour = rng.integers(0, 24, size=n)
    dow = rng.integers(0, 7, size=n)
    vehicle = rng.integers(0, len(categories), size=n)
    tract = rng.integers(0, spec.n_tracts, size=n)
    tract_features = draw_features(rng, spec.n_tracts)

    cz = tract_features["complexity"][tract] > np.median(tract_features["complexity"])
    wz = tract_features["avg_street_width_m"][tract] > np.median(tract_features["avg_street_width_m"])
    two_wheeler = vehicle == categories.index("two_wheeler")
    night = hour < 5
    score = spec.point_signal * (2.5 * (cz == wz) + 1.5 * two_wheeler + 0.8 * night)
    p = expit(_intercept_for_rate(score, spec.positive_rate) + score)
    label = (rng.random(n) < p).astype(int)

    ids = [tract_id(r, c) for r in range(spec.grid_rows) for c in range(spec.grid_cols)]
    frame = pd.DataFrame({
        "accident_id": [f"P{i:07d}" for i in range(n)],
        "tract_id": [ids[j] for j in tract],
        "hour": hour,
        "day_of_week": dow,
        **{f"vehicle_{c}": (vehicle == k).astype(int) for k, c in enumerate(categories)},
        **{name: tract_features[name][tract] for name in SPATIAL_FEATURES},
        "label": label,
    })
    logger.info(f"Synthetic point table: {n} rows, positive share {label.mean():.3f}")
    return frame[POINT_COLUMNS]


def _square(x0: float, y0: float, size: float, ref: GeoPoint) -> PolygonGeom:
    xs = np.array([x0, x0 + size, x0 + size, x0])
    ys = np.array([y0, y0, y0 + size, y0 + size])
    lons, lats = unproject_arrays(xs, ys, ref)
    return PolygonGeom.from_coords(list(zip(lons.tolist(), lats.tolist())))


def _tract_streets(
    rng: np.random.Generator,
    prefix: str,
    x0: float,
    y0: float,
    size: float,
    ref: GeoPoint
) -> Tuple[Dict[str, GeoPoint], List[StreetEdge]]:
    g = int(rng.integers(3, 7))
    drop = rng.uniform(0.0, 0.35)
    curviness = rng.uniform(0.0, 0.4)
    width = max(rng.normal(*FEATURE_MOMENTS["avg_street_width_m"]), 4.0)
    lanes = rng.gamma(1.2, 1.2)

    margin = 0.1 * size
    ticks = np.linspace(margin, size - margin, g)
    gx, gy = np.meshgrid(x0 + ticks, y0 + ticks, indexing="ij")
    lons, lats = unproject_arrays(gx.ravel(), gy.ravel(), ref)
    names = [f"{prefix}_{i}_{j}" for i in range(g) for j in range(g)]
    nodes = {name: GeoPoint(float(lon), float(lat)) for name, lon, lat in zip(names, lons, lats)}

    step = ticks[1] - ticks[0]
    edges = []
    for i in range(g):
        for j in range(g):
            for di, dj in ((1, 0), (0, 1)):
                if i + di >= g or j + dj >= g or rng.random() < drop:
                    continue
                edges.append(StreetEdge(
                    u=names[i * g + j],
                    v=names[(i + di) * g + j + dj],
                    length_m=float(step * (1.0 + curviness * rng.random())),
                    width_m=float(max(width + rng.normal(0.0, 1.0), 2.0)),
                    bike_lanes=int(rng.poisson(lanes)),
                ))
    return nodes, edges


def _accidents_for_tract(
    rng: np.random.Generator,
    prefix: str,
    x0: float,
    y0: float,
    size: float,
    ref: GeoPoint,
    n_severe: int,
    n_minor: int
) -> List[AccidentRecord]:
    n = n_severe + n_minor
    xs = x0 + rng.uniform(0.05, 0.95, n) * size
    ys = y0 + rng.uniform(0.05, 0.95, n) * size
    lons, lats = unproject_arrays(xs, ys, ref)
    start = datetime.datetime(2019, 1, 1)
    minutes = rng.integers(0, 365 * 24 * 60, size=n)
    raw_pool = [raw for names in RAW_VEHICLES.values() for raw in names]
    records = []
    for i in range(n):
        severe = i < n_severe
        n_vehicles = int(rng.integers(1, 3))
        vehicles = tuple(raw_pool[k] for k in rng.integers(0, len(raw_pool), size=n_vehicles))
        injured = 1 + int(rng.poisson(0.3)) if severe else 0
        records.append(AccidentRecord(
            id=f"{prefix}A{i:04d}",
            location=GeoPoint(float(lons[i]), float(lats[i])),
            timestamp=start + datetime.timedelta(minutes=int(minutes[i])),
            vehicle_types=vehicles,
            injured=injured,
            killed=int(severe and rng.random() < 0.01),
        ))
    return records


def generate_synthetic_city(spec: SyntheticSpec) -> SyntheticCity:
    """
    Tracts, street network and accidents for a square grid city.

    Severe counts per tract follow the planted signal computed from the
    tract's own network summary, plus the spatial field and noise; minor
    accidents are added so the overall positive share is close to
    spec.positive_rate.
    """
    rng = np.random.default_rng([spec.seed, 0])
    ref = GeoPoint(spec.origin_lon, spec.origin_lat)
    size = spec.tract_size_m
    x_min = -spec.grid_cols * size / 2.0
    y_min = -spec.grid_rows * size / 2.0

    tracts: List[CensusTract] = []
    network = StreetNetwork()
    corners = []
    for r in range(spec.grid_rows):
        for c in range(spec.grid_cols):
            tid = tract_id(r, c)
            x0, y0 = x_min + c * size, y_min + r * size
            corners.append((x0, y0))
            tracts.append(make_tract(tid, [_square(x0, y0, size, ref)]))
            nodes, edges = _tract_streets(rng, tid, x0, y0, size, ref)
            network.add_nodes(nodes)
            network.add_edges(edges)

    summaries, _ = summarize_tracts(network, tracts)
    features = {
        name: np.array([getattr(s, name) or 0.0 for s in summaries], dtype=float)
        for name in SPATIAL_FEATURES
    }
    field = spatial_field(rng, tract_centers(spec), spec.spatial_lengthscale_m, spec.spatial_amplitude)
    signal = planted_signal(spec, features)
    severe = _counts(spec, rng, signal, field)

    odds = (1.0 - spec.positive_rate) / spec.positive_rate
    accidents: List[AccidentRecord] = []
    for j, t in enumerate(tracts):
        n_minor = int(rng.poisson(max(severe[j], 1) * odds))
        x0, y0 = corners[j]
        accidents.extend(_accidents_for_tract(rng, t.tract_id, x0, y0, size, ref, int(severe[j]), n_minor))

    logger.info(
        f"Synthetic city: {len(tracts)} tracts, {len(network.nodes)} nodes, "
        f"{len(network.edges)} edges, {len(accidents)} accidents"
    )
    return SyntheticCity(tracts=tracts, network=network, accidents=accidents, signal=signal, spatial_field=field)


def city_tables(city: SyntheticCity) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Aggregated and point tables derived from the city itself, the same way
    the features command derives them from the raw files.
    """
    summaries, _ = summarize_tracts(city.network, city.tracts)
    aggregated, _ = build_aggregated(city.accidents, city.tracts, summaries)
    point, _ = build_point(city.accidents, city.tracts, summaries)
    return aggregated, point


def save_synthetic(spec: SyntheticSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write a synthetic city plus both model-ready tables built from it.

    Returns:
        Mapping of artifact name to written path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    city = generate_synthetic_city(spec)
    paths = {
        "tracts": out / "tracts.geojson",
        "nodes": out / "nodes.csv",
        "edges": out / "edges.csv",
        "accidents": out / "accidents.csv",
        "aggregated": out / "aggregated.csv",
        "point": out / "point.csv",
        "spec": out / "synthetic_spec.json",
    }
    write_tracts(city.tracts, paths["tracts"])
    write_network(city.network, paths["nodes"], paths["edges"])
    write_accidents(city.accidents, paths["accidents"])
    aggregated, point = city_tables(city)
    write_table(aggregated, paths["aggregated"])
    write_table(point, paths["point"])
    paths["spec"].write_text(spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Synthetic dataset written to {out}")
    return paths

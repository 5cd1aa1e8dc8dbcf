"""
Geometry primitives shared by every spatial computation in crashlens.

All functions are pure. Distances are great-circle on a sphere of radius
EARTH_RADIUS_M; planar work happens in a local equirectangular projection
around a reference point.
"""

import math
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
from shapely.geometry import LinearRing, MultiPolygon, Polygon

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0

# Collinearity tolerance (degrees) for the boundary-counts-as-inside rule
BOUNDARY_TOL_DEG = 1e-12


@dataclass(frozen=True)
class GeoPoint:
    """A longitude/latitude pair in degrees."""
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class PlanePoint:
    """Meters east (x) and north (y) of a projection reference."""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite plane coordinates ({self.x}, {self.y})")


@dataclass(frozen=True, eq=False)
class PolygonGeom:
    """
    A polygon with one exterior ring and optional holes.

    Rings are stored open: the closing vertex is implicit and never repeated.
    Use `PolygonGeom.from_coords` to build one from raw (possibly closed)
    coordinate lists; it also rejects self-intersecting rings.
    """
    exterior: Tuple[GeoPoint, ...]
    holes: Tuple[Tuple[GeoPoint, ...], ...] = ()

    def __post_init__(self):
        for ring in (self.exterior, *self.holes):
            if len(ring) < 3:
                raise ValueError(f"ring has {len(ring)} vertices, need at least 3")

    @classmethod
    def from_coords(
        cls,
        exterior: Sequence[Sequence[float]],
        holes: Sequence[Sequence[Sequence[float]]] = ()
    ) -> "PolygonGeom":
        """
        Build a validated polygon from [lon, lat] coordinate rings.

        Args:
            exterior: Exterior ring, closed or open
            holes: Interior rings, closed or open

        Returns:
            PolygonGeom with open rings

        Raises:
            ValueError: if a ring has fewer than 3 distinct vertices or
                intersects itself
        """
        return cls(
            exterior=_clean_ring(exterior),
            holes=tuple(_clean_ring(h) for h in holes),
        )

    @cached_property
    def ring_arrays(self) -> List[np.ndarray]:
        """Rings as (n, 2) float arrays of lon/lat, exterior first."""
        return [
            np.array([[p.lon, p.lat] for p in ring], dtype=float)
            for ring in (self.exterior, *self.holes)
        ]

    @cached_property
    def bounds(self) -> Tuple[float, float, float, float]:
        ext = self.ring_arrays[0]
        return (
            float(ext[:, 0].min()), float(ext[:, 1].min()),
            float(ext[:, 0].max()), float(ext[:, 1].max()),
        )


def _clean_ring(coords: Sequence[Sequence[float]]) -> Tuple[GeoPoint, ...]:
    points = [GeoPoint(float(c[0]), float(c[1])) for c in coords]
    if len(points) > 1 and points[0] == points[-1]:
        points = points[:-1]
    if len(set(points)) < 3:
        raise ValueError(f"ring has {len(set(points))} distinct vertices, need at least 3")
    if not LinearRing([(p.lon, p.lat) for p in points]).is_simple:
        raise ValueError("ring is self-intersecting")
    return tuple(points)


def haversine_m(lon1, lat1, lon2, lat2):
    """Vectorised haversine distance in meters; accepts scalars or arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in meters."""
    if a == b:
        return 0.0
    return float(haversine_m(a.lon, a.lat, b.lon, b.lat))


def points_in_polygon(lons: np.ndarray, lats: np.ndarray, poly: PolygonGeom) -> np.ndarray:
    """
    Even-odd containment test for many points at once.

    Points inside a hole are outside. Points on any ring (exterior or hole)
    count as inside.

    Args:
        lons: Longitudes, shape (n,)
        lats: Latitudes, shape (n,)
        poly: Polygon to test against

    Returns:
        Boolean array of shape (n,)
    """
    px = np.asarray(lons, dtype=float)
    py = np.asarray(lats, dtype=float)
    inside = np.zeros(px.shape, dtype=bool)
    on_boundary = np.zeros(px.shape, dtype=bool)

    with np.errstate(divide="ignore", invalid="ignore"):
        for ring in poly.ring_arrays:
            xs, ys = ring[:, 0], ring[:, 1]
            xe, ye = np.roll(xs, -1), np.roll(ys, -1)
            for xi, yi, xj, yj in zip(xs, ys, xe, ye):
                straddles = (yi > py) != (yj > py)
                x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi
                inside ^= straddles & (px < x_cross)

                seg_len = math.hypot(xj - xi, yj - yi)
                cross = np.abs((xj - xi) * (py - yi) - (yj - yi) * (px - xi))
                within = (
                    (px >= min(xi, xj) - BOUNDARY_TOL_DEG) & (px <= max(xi, xj) + BOUNDARY_TOL_DEG)
                    & (py >= min(yi, yj) - BOUNDARY_TOL_DEG) & (py <= max(yi, yj) + BOUNDARY_TOL_DEG)
                )
                on_boundary |= within & (cross <= BOUNDARY_TOL_DEG * max(seg_len, 1.0))

    return inside | on_boundary


def point_in_polygon(p: GeoPoint, poly: PolygonGeom) -> bool:
    """Even-odd containment with the boundary-counts-as-inside convention."""
    return bool(points_in_polygon(np.array([p.lon]), np.array([p.lat]), poly)[0])


def project_arrays(lons, lats, ref: GeoPoint) -> Tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection of coordinate arrays around `ref`, in meters."""
    cos_ref = math.cos(math.radians(ref.lat))
    x = EARTH_RADIUS_M * np.radians(np.asarray(lons, dtype=float) - ref.lon) * cos_ref
    y = EARTH_RADIUS_M * np.radians(np.asarray(lats, dtype=float) - ref.lat)
    return x, y


def unproject_arrays(xs, ys, ref: GeoPoint) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of `project_arrays`."""
    cos_ref = math.cos(math.radians(ref.lat))
    lons = ref.lon + np.degrees(np.asarray(xs, dtype=float) / (EARTH_RADIUS_M * cos_ref))
    lats = ref.lat + np.degrees(np.asarray(ys, dtype=float) / EARTH_RADIUS_M)
    return lons, lats


def project_local(points: Sequence[GeoPoint], ref: GeoPoint) -> List[PlanePoint]:
    """
    Project points to a local plane centred on `ref`.

    x = R * dlon * cos(lat_ref), y = R * dlat, with angles in radians.
    Intended for city-scale extents (within about one degree of `ref`).
    """
    x, y = project_arrays([p.lon for p in points], [p.lat for p in points], ref)
    return [PlanePoint(float(a), float(b)) for a, b in zip(x, y)]


def unproject_local(points: Sequence[PlanePoint], ref: GeoPoint) -> List[GeoPoint]:
    """Map plane points produced by `project_local` back to lon/lat."""
    lons, lats = unproject_arrays([p.x for p in points], [p.y for p in points], ref)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lons, lats)]


def to_shapely(poly: PolygonGeom, ref: GeoPoint) -> Polygon:
    """Polygon projected to the local plane around `ref` (meters)."""
    rings = []
    for ring in poly.ring_arrays:
        x, y = project_arrays(ring[:, 0], ring[:, 1], ref)
        rings.append(np.column_stack([x, y]))
    return Polygon(rings[0], holes=rings[1:])


def multipolygon_centroid(parts: Sequence[PolygonGeom]) -> GeoPoint:
    """
    Area-weighted centroid of one or more polygon parts.

    Raises:
        ValueError: if the total area is zero
    """
    if not parts:
        raise ValueError("degenerate polygon: no parts")
    first = parts[0].exterior[0]
    ref = GeoPoint(first.lon, first.lat)

    shape = MultiPolygon([to_shapely(part, ref) for part in parts])
    # 1 cm^2 is below any real tract
    if shape.area <= 1e-4:
        raise ValueError("degenerate polygon: zero area")

    c = shape.centroid
    lons, lats = unproject_arrays(np.array([c.x]), np.array([c.y]), ref)
    return GeoPoint(float(lons[0]), float(lats[0]))


def polygon_centroid(poly: PolygonGeom) -> GeoPoint:
    """Area-weighted centroid of a single polygon (holes subtracted)."""
    return multipolygon_centroid([poly])

import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union
from os import PathLike

from src.geo.geometry import GeoPoint, PolygonGeom, multipolygon_centroid
from src.ingest.report import IngestError

logger = logging.getLogger(__name__)

DEFAULT_ID_PROPERTY = "tract_id"


@dataclass(frozen=True, eq=False)
class CensusTract:
    """A census tract; multi-part tracts hold several polygon parts."""
    tract_id: str
    geometry: tuple  # Tuple[PolygonGeom, ...]
    centroid: GeoPoint

    @property
    def bounds(self):
        boxes = [part.bounds for part in self.geometry]
        return (
            min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes),
        )


def make_tract(tract_id: str, parts: Sequence[PolygonGeom]) -> CensusTract:
    """Build a tract and compute its area-weighted centroid."""
    parts = tuple(parts)
    return CensusTract(tract_id=tract_id, geometry=parts, centroid=multipolygon_centroid(parts))


def _polygon_parts(geometry: Dict[str, Any]) -> List[PolygonGeom]:
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Polygon":
        polygons = [coords]
    elif gtype == "MultiPolygon":
        polygons = coords
    else:
        raise ValueError(f"unsupported geometry type {gtype!r} (only Polygon/MultiPolygon)")
    if not polygons:
        raise ValueError("empty geometry")
    return [PolygonGeom.from_coords(rings[0], rings[1:]) for rings in polygons]


def parse_tracts(
    source: Union[str, PathLike, TextIO],
    id_property: str = DEFAULT_ID_PROPERTY
) -> List[CensusTract]:
    """
    Parse census tracts from a GeoJSON FeatureCollection.

    Args:
        source: Path, open text stream, or a GeoJSON string starting with '{'
        id_property: Feature property holding the tract id

    Returns:
        Tracts in feature order

    Raises:
        IngestError: malformed JSON, non-polygon geometry, invalid rings,
            missing id property, or duplicate id
    """
    try:
        if hasattr(source, "read"):
            document = json.load(source)
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            document = json.loads(source)
        else:
            with open(source, "r", encoding="utf-8") as file:
                document = json.load(file)
    except json.JSONDecodeError as e:
        raise IngestError(f"invalid GeoJSON at byte {e.pos}: {e.msg}")

    if document.get("type") != "FeatureCollection":
        raise IngestError("tract file must be a GeoJSON FeatureCollection")

    tracts: List[CensusTract] = []
    seen = set()
    for i, feature in enumerate(document.get("features", []), start=1):
        properties = feature.get("properties") or {}
        raw_id: Optional[Any] = properties.get(id_property)
        if raw_id is None or str(raw_id).strip() == "":
            raise IngestError(f"missing id property {id_property!r}", row=i)
        tract_id = str(raw_id)
        if tract_id in seen:
            raise IngestError(f"duplicate id {tract_id!r}", row=i)
        seen.add(tract_id)

        try:
            parts = _polygon_parts(feature.get("geometry") or {})
            tracts.append(make_tract(tract_id, parts))
        except ValueError as e:
            raise IngestError(f"tract {tract_id}: {e}", row=i)

    logger.info(f"Parsed {len(tracts)} census tracts")
    return tracts


def tract_feature(tract: CensusTract, properties: Dict[str, Any]) -> Dict[str, Any]:
    """GeoJSON Feature for a tract with the given properties."""
    polygons = []
    for part in tract.geometry:
        rings = []
        for ring in (part.exterior, *part.holes):
            coords = [[p.lon, p.lat] for p in ring]
            coords.append(coords[0])
            rings.append(coords)
        polygons.append(rings)

    if len(polygons) == 1:
        geometry = {"type": "Polygon", "coordinates": polygons[0]}
    else:
        geometry = {"type": "MultiPolygon", "coordinates": polygons}
    return {
        "type": "Feature",
        "properties": {DEFAULT_ID_PROPERTY: tract.tract_id, **properties},
        "geometry": geometry,
    }


def write_tracts(
    tracts: Sequence[CensusTract],
    target: Union[str, PathLike],
    properties: Optional[Dict[str, Dict[str, Any]]] = None
) -> None:
    """Write tracts as a FeatureCollection, with optional per-tract properties."""
    properties = properties or {}
    document = {
        "type": "FeatureCollection",
        "features": [tract_feature(t, properties.get(t.tract_id, {})) for t in tracts],
    }
    with open(target, "w", encoding="utf-8") as file:
        json.dump(document, file, indent=1, allow_nan=False)

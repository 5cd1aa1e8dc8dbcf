"""
Street network parser: nodes.csv (node_id,lon,lat) and
edges.csv (u,v,length_m,width_m,bike_lanes; last three may be empty).
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, TextIO, Tuple, Union
from os import PathLike

import networkx as nx
import numpy as np
import pandas as pd

from src.geo.geometry import GeoPoint, haversine_m
from src.ingest.report import IngestError, IngestReport, ReportBuilder

logger = logging.getLogger(__name__)

NODE_COLUMNS = ["node_id", "lon", "lat"]
EDGE_COLUMNS = ["u", "v", "length_m", "width_m", "bike_lanes"]

Source = Union[str, PathLike, TextIO]


@dataclass(frozen=True)
class StreetEdge:
    u: str
    v: str
    length_m: Optional[float] = None
    width_m: Optional[float] = None
    bike_lanes: Optional[int] = None


class StreetNetwork:
    """
    Undirected street graph held as a networkx MultiGraph.

    Nodes carry their GeoPoint under "point"; each edge carries its
    StreetEdge under "edge" and an insertion counter under "seq" so that
    `edges` comes back in file order with the original orientation.
    """

    def __init__(
        self,
        nodes: Optional[Dict[str, GeoPoint]] = None,
        edges: Optional[Iterable[StreetEdge]] = None,
        graph: Optional[nx.MultiGraph] = None,
    ):
        self.graph = graph if graph is not None else nx.MultiGraph()
        self._seq = max((s for _, _, s in self.graph.edges(data="seq")), default=-1) + 1
        self.add_nodes(nodes or {})
        self.add_edges(edges or [])

    def add_nodes(self, nodes: Dict[str, GeoPoint]) -> None:
        self.graph.add_nodes_from((node_id, {"point": p}) for node_id, p in nodes.items())

    def add_edges(self, edges: Iterable[StreetEdge]) -> None:
        for edge in edges:
            self.graph.add_edge(edge.u, edge.v, edge=edge, seq=self._seq)
            self._seq += 1

    @property
    def nodes(self) -> Dict[str, GeoPoint]:
        return dict(self.graph.nodes(data="point"))

    @property
    def edges(self) -> List[StreetEdge]:
        ordered = sorted(self.graph.edges(data=True), key=lambda e: e[2]["seq"])
        return [data["edge"] for _, _, data in ordered]

    def degrees(self) -> Dict[str, int]:
        """Undirected degree of every node (isolated nodes have 0)."""
        return dict(self.graph.degree())

    def subnetwork(self, node_ids: Iterable[str]) -> "StreetNetwork":
        """Induced subgraph on `node_ids`, keeping edge order and attributes."""
        return StreetNetwork(graph=self.graph.subgraph(node_ids).copy())

    def chord_lengths(self) -> np.ndarray:
        """Great-circle distance between the endpoints of each edge, in meters."""
        edges = self.edges
        if not edges:
            return np.zeros(0)
        nodes = self.nodes
        u = [nodes[e.u] for e in edges]
        v = [nodes[e.v] for e in edges]
        return haversine_m(
            np.array([p.lon for p in u]), np.array([p.lat for p in u]),
            np.array([p.lon for p in v]), np.array([p.lat for p in v]),
        )


class _RowRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _read_frame(
    source: Source, columns: List[str], required: List[str], name: str
) -> Tuple[pd.DataFrame, List[List[str]]]:
    long_rows: List[List[str]] = []

    def _collect(fields: List[str]) -> None:
        long_rows.append(fields)
        return None

    try:
        frame = pd.read_csv(
            source, dtype=str, keep_default_na=False, engine="python", on_bad_lines=_collect,
        )
    except pd.errors.EmptyDataError:
        raise IngestError(f"{name} file is empty (header row required)")
    except pd.errors.ParserError as e:
        raise IngestError(f"malformed {name} CSV: {e}")
    frame = frame.fillna("")
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestError(f"{name}: missing required columns: {', '.join(missing)}")
    for col in columns:
        if col not in frame.columns:
            frame[col] = ""
    return frame, long_rows


def _optional_positive(raw: str, reason: str) -> Optional[float]:
    raw = raw.strip()
    if not raw:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise _RowRejected(reason)
    if not math.isfinite(value) or value <= 0:
        raise _RowRejected(reason)
    return value


def _optional_count(raw: str) -> Optional[int]:
    raw = raw.strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise _RowRejected("bad_bike_lanes")
    if value < 0:
        raise _RowRejected("bad_bike_lanes")
    return value


def _chord_m(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_m(np.array([a.lon]), np.array([a.lat]), np.array([b.lon]), np.array([b.lat]))[0])


def parse_network(
    nodes_source: Source,
    edges_source: Source,
    strict: bool = False
) -> Tuple[StreetNetwork, IngestReport]:
    """
    Parse a street network from node and edge tables.

    Node rows with bad coordinates or duplicate ids are rejected, as are
    edges with an unknown endpoint ("dangling_edge"), self loops
    ("self_loop") or non-positive attributes. A missing length is filled
    with the great-circle distance between the endpoints; an edge whose
    endpoints coincide and has no length is rejected as "bad_length".
    Rows with more fields than the header are rejected as "malformed_row".

    Args:
        nodes_source: nodes.csv path or stream
        edges_source: edges.csv path or stream
        strict: Turn the first rejected row into a fatal error

    Returns:
        Tuple of (network, report counting node and edge rows together)

    Raises:
        IngestError: missing columns, or any rejection under strict mode
    """
    node_frame, long_nodes = _read_frame(nodes_source, NODE_COLUMNS, NODE_COLUMNS, "nodes")
    edge_frame, long_edges = _read_frame(edges_source, EDGE_COLUMNS, ["u", "v"], "edges")

    builder = ReportBuilder("network")

    def _reject(reason: str, row: int, table: str) -> None:
        if strict:
            raise IngestError(f"{table}: {reason}", row=row)
        builder.reject(reason)

    for table, long_rows in [("nodes", long_nodes), ("edges", long_edges)]:
        if long_rows and strict:
            raise IngestError(f"{table}: malformed_row with {len(long_rows[0])} fields")
        for _ in long_rows:
            builder.reject("malformed_row")

    nodes: Dict[str, GeoPoint] = {}
    for i, row in enumerate(node_frame.to_dict(orient="records"), start=1):
        node_id = row["node_id"].strip()
        try:
            point = GeoPoint(float(row["lon"]), float(row["lat"]))
        except ValueError:
            _reject("bad_node_coordinates", i, "nodes")
            continue
        if not node_id:
            _reject("missing_node_id", i, "nodes")
        elif node_id in nodes:
            _reject("duplicate_node", i, "nodes")
        else:
            nodes[node_id] = point
            builder.accept()

    edges: List[StreetEdge] = []
    backfilled = 0
    for i, row in enumerate(edge_frame.to_dict(orient="records"), start=1):
        u, v = row["u"].strip(), row["v"].strip()
        try:
            if u not in nodes or v not in nodes:
                raise _RowRejected("dangling_edge")
            if u == v:
                logger.warning(f"edges row {i}: self loop on node {u} dropped")
                raise _RowRejected("self_loop")
            length = _optional_positive(row["length_m"], "bad_length")
            if length is None:
                # Back-fill from endpoint distance
                length = _chord_m(nodes[u], nodes[v])
                if length <= 0.0:
                    raise _RowRejected("bad_length")
                backfilled += 1
            edge = StreetEdge(
                u=u,
                v=v,
                length_m=length,
                width_m=_optional_positive(row["width_m"], "bad_width"),
                bike_lanes=_optional_count(row["bike_lanes"]),
            )
        except _RowRejected as rejected:
            _reject(rejected.reason, i, "edges")
            continue
        edges.append(edge)
        builder.accept()

    if backfilled:
        logger.info(f"Back-filled {backfilled} edge lengths from endpoint distance")
    return StreetNetwork(nodes=nodes, edges=edges), builder.build()


def _format_optional(value) -> str:
    return "" if value is None else repr(value)


def write_network(network: StreetNetwork, nodes_target: Source, edges_target: Source) -> None:
    """Write the network back to the canonical nodes/edges CSV pair."""
    nodes = pd.DataFrame(
        [[node_id, repr(p.lon), repr(p.lat)] for node_id, p in network.nodes.items()],
        columns=NODE_COLUMNS,
    )
    edges = pd.DataFrame(
        [
            [e.u, e.v, _format_optional(e.length_m), _format_optional(e.width_m),
             "" if e.bike_lanes is None else str(e.bike_lanes)]
            for e in network.edges
        ],
        columns=EDGE_COLUMNS,
    )
    nodes.to_csv(nodes_target, index=False, lineterminator="\n")
    edges.to_csv(edges_target, index=False, lineterminator="\n")

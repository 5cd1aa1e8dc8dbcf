"""
Per-tract street-network summaries: intersections, circuity, complexity
(intersections x circuity) and attribute averages.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel

from src.geo.geometry import points_in_polygon
from src.ingest.network import StreetNetwork
from src.ingest.tracts import CensusTract

logger = logging.getLogger(__name__)

# Measured lengths may undercut the chord by rounding; below this it is flagged
CHORD_SLACK = 1e-9

SUMMARY_COLUMNS = [
    "tract_id", "intersections", "circuity", "complexity", "avg_node_degree",
    "avg_street_width_m", "avg_bike_lanes", "n_nodes", "n_edges", "empty", "below_chord_edges",
]


class TractNetworkSummary(BaseModel):
    """Street-network features of one tract."""
    tract_id: str
    intersections: int
    circuity: Optional[float]
    complexity: float
    avg_node_degree: float
    avg_street_width_m: Optional[float]
    avg_bike_lanes: Optional[float]
    n_nodes: int
    n_edges: int
    empty: bool = False
    below_chord_edges: int = 0


class NetworkCoverage(BaseModel):
    """How the street graph was distributed over tracts."""
    nodes_total: int
    nodes_outside_tracts: int
    edges_total: int
    edges_assigned: int
    edges_straddling: int
    empty_tracts: int
    below_chord_edges: int


def _node_arrays(net: StreetNetwork) -> Tuple[List[str], np.ndarray, np.ndarray]:
    nodes = net.nodes
    ids = list(nodes)
    lons = np.array([nodes[i].lon for i in ids], dtype=float)
    lats = np.array([nodes[i].lat for i in ids], dtype=float)
    return ids, lons, lats


def _nodes_in_tract(net: StreetNetwork, tract: CensusTract) -> set:
    ids, lons, lats = _node_arrays(net)
    if not ids:
        return set()
    xmin, ymin, xmax, ymax = tract.bounds
    candidate = (lons >= xmin) & (lons <= xmax) & (lats >= ymin) & (lats <= ymax)
    inside = np.zeros(len(ids), dtype=bool)
    for part in tract.geometry:
        idx = np.flatnonzero(candidate & ~inside)
        if len(idx):
            inside[idx] = points_in_polygon(lons[idx], lats[idx], part)
    return {ids[i] for i in np.flatnonzero(inside)}


def clip_network(net: StreetNetwork, tract: CensusTract) -> StreetNetwork:
    """
    Sub-network of nodes inside the tract (boundary counts as inside) and
    edges whose both endpoints are kept.
    """
    return net.subnetwork(_nodes_in_tract(net, tract))


def circuity(net: StreetNetwork) -> Optional[float]:
    """
    Ratio of summed edge lengths to summed endpoint great-circle distances.

    Returns:
        The ratio, or None when the network has no edges

    Raises:
        ValueError: if the summed chord length is zero
    """
    if net.graph.number_of_edges() == 0:
        return None
    chords = net.chord_lengths()
    total_chord = float(chords.sum())
    if total_chord <= 0.0:
        raise ValueError("zero total chord length (coincident edge endpoints)")
    total_length = float(sum(e.length_m for e in net.edges))
    return total_length / total_chord


def intersection_count(net: StreetNetwork) -> int:
    """Number of nodes with undirected degree of at least 3."""
    return sum(1 for d in net.degrees().values() if d >= 3)


def _mean_attribute(net: StreetNetwork, attr: str, length_weighted: bool) -> Optional[float]:
    pairs = [(getattr(e, attr), e.length_m) for e in net.edges if getattr(e, attr) is not None]
    if not pairs:
        return None
    values = np.array([p[0] for p in pairs], dtype=float)
    if length_weighted:
        weights = np.array([p[1] for p in pairs], dtype=float)
        return float(np.average(values, weights=weights))
    return float(values.mean())


def _below_chord(net: StreetNetwork) -> int:
    if net.graph.number_of_edges() == 0:
        return 0
    lengths = np.array([e.length_m for e in net.edges], dtype=float)
    return int(np.sum(lengths < net.chord_lengths() * (1.0 - CHORD_SLACK)))


def summarize_clipped(
    clipped: StreetNetwork,
    tract_id: str,
    directed_degree: bool = False,
    length_weighted: bool = False
) -> TractNetworkSummary:
    """Summary of an already-clipped tract network."""
    if clipped.graph.number_of_edges() == 0:
        return TractNetworkSummary(
            tract_id=tract_id, intersections=0, circuity=None, complexity=0.0,
            avg_node_degree=0.0, avg_street_width_m=None, avg_bike_lanes=None,
            n_nodes=clipped.graph.number_of_nodes(), n_edges=0, empty=True,
        )

    degrees = np.array(list(clipped.degrees().values()), dtype=float)
    if directed_degree:
        # every undirected street counts as two arcs
        degrees = 2.0 * degrees
    n_inter = intersection_count(clipped)
    circ = circuity(clipped)
    below = _below_chord(clipped)
    if below:
        logger.warning(f"tract {tract_id}: {below} edges shorter than their chord")

    return TractNetworkSummary(
        tract_id=tract_id,
        intersections=n_inter,
        circuity=circ,
        complexity=n_inter * circ,
        avg_node_degree=float(degrees.mean()),
        avg_street_width_m=_mean_attribute(clipped, "width_m", length_weighted),
        avg_bike_lanes=_mean_attribute(clipped, "bike_lanes", length_weighted),
        n_nodes=clipped.graph.number_of_nodes(),
        n_edges=clipped.graph.number_of_edges(),
        below_chord_edges=below,
    )


def tract_summary(
    net: StreetNetwork,
    tract: CensusTract,
    directed_degree: bool = False,
    length_weighted: bool = False
) -> TractNetworkSummary:
    """
    Network summary for one tract.

    Args:
        net: Full street network
        tract: Tract to clip to
        directed_degree: Report average degree counting each street as two arcs
        length_weighted: Weight width/bike-lane means by edge length

    Returns:
        TractNetworkSummary; empty tracts get zeros, absent fields and
        `empty=True`
    """
    return summarize_clipped(clip_network(net, tract), tract.tract_id, directed_degree, length_weighted)


def summarize_tracts(
    net: StreetNetwork,
    tracts: Sequence[CensusTract],
    directed_degree: bool = False,
    length_weighted: bool = False,
    n_jobs: int = 1
) -> Tuple[List[TractNetworkSummary], NetworkCoverage]:
    """
    Summaries for every tract plus a coverage report.

    Each node is assigned to the tract with the lowest id among those
    containing it, so every edge belongs to at most one tract.
    """
    order = sorted(range(len(tracts)), key=lambda j: tracts[j].tract_id)
    owner = {}
    for j in order:
        for node_id in _nodes_in_tract(net, tracts[j]):
            owner.setdefault(node_id, j)

    members: List[List[str]] = [[] for _ in tracts]
    for node_id, j in owner.items():
        members[j].append(node_id)

    edges = net.edges
    straddling = sum(1 for e in edges if owner.get(e.u) is None or owner.get(e.u) != owner.get(e.v))

    # Induced subgraph per tract keeps exactly the edges with both ends owned
    clipped = [net.subnetwork(sorted(members[j])) for j in range(len(tracts))]
    summaries = Parallel(n_jobs=n_jobs)(
        delayed(summarize_clipped)(clipped[j], tracts[j].tract_id, directed_degree, length_weighted)
        for j in range(len(tracts))
    )

    coverage = NetworkCoverage(
        nodes_total=net.graph.number_of_nodes(),
        nodes_outside_tracts=net.graph.number_of_nodes() - len(owner),
        edges_total=len(edges),
        edges_assigned=len(edges) - straddling,
        edges_straddling=straddling,
        empty_tracts=sum(1 for s in summaries if s.empty),
        below_chord_edges=sum(s.below_chord_edges for s in summaries),
    )
    logger.info(
        f"Summarised {len(tracts)} tracts: {coverage.edges_assigned}/{coverage.edges_total} "
        f"edges assigned, {coverage.empty_tracts} empty tracts"
    )
    return list(summaries), coverage


def summaries_to_frame(summaries: Sequence[TractNetworkSummary]) -> pd.DataFrame:
    """One row per tract, columns in SUMMARY_COLUMNS order."""
    return pd.DataFrame([s.model_dump() for s in summaries], columns=SUMMARY_COLUMNS)


def write_summaries(summaries: Sequence[TractNetworkSummary], target) -> None:
    summaries_to_frame(summaries).to_csv(target, index=False, lineterminator="\n")

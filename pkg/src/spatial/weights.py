"""
Binary queen-contiguity spatial weights.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from src.geo.geometry import GeoPoint, project_arrays
from src.ingest.tracts import CensusTract

logger = logging.getLogger(__name__)

DEFAULT_SNAP_TOL_M = 0.5


@dataclass(frozen=True)
class SpatialWeights:
    """
    Symmetric binary neighbour structure over n units.

    w_jk = 1 when k appears in neighbors[j], else 0. Neighbour lists are
    sorted and never contain the unit itself.
    """
    n: int
    neighbors: Tuple[Tuple[int, ...], ...]
    ids: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if len(self.neighbors) != self.n:
            raise ValueError(f"expected {self.n} neighbour lists, got {len(self.neighbors)}")
        if self.ids is not None and len(self.ids) != self.n:
            raise ValueError(f"expected {self.n} ids, got {len(self.ids)}")
        for j, nbrs in enumerate(self.neighbors):
            if j in nbrs:
                raise ValueError(f"unit {j} lists itself as a neighbour")
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError(f"neighbour list of unit {j} must be sorted and unique")
            for k in nbrs:
                if not 0 <= k < self.n or j not in self.neighbors[k]:
                    raise ValueError(f"weights not symmetric between {j} and {k}")

    @classmethod
    def from_pairs(cls, n: int, pairs, ids: Optional[Sequence[str]] = None) -> "SpatialWeights":
        """Build weights from undirected (j, k) pairs."""
        adjacency: List[Set[int]] = [set() for _ in range(n)]
        for j, k in pairs:
            if j == k:
                continue
            adjacency[j].add(k)
            adjacency[k].add(j)
        return cls(
            n=n,
            neighbors=tuple(tuple(sorted(a)) for a in adjacency),
            ids=tuple(ids) if ids is not None else None,
        )

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self.neighbors], dtype=int)

    @property
    def islands(self) -> List[int]:
        return [j for j, nbrs in enumerate(self.neighbors) if not nbrs]

    def to_sparse(self) -> sparse.csr_matrix:
        """Binary weights as a scipy CSR matrix."""
        rows = np.repeat(np.arange(self.n), self.cardinalities)
        cols = np.array([k for nbrs in self.neighbors for k in nbrs], dtype=int)
        data = np.ones(len(cols))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def subset(self, keep: Sequence[int]) -> "SpatialWeights":
        """Weights restricted to the units in `keep` (re-indexed in that order)."""
        position = {old: new for new, old in enumerate(keep)}
        pairs = [
            (position[j], position[k])
            for j in keep for k in self.neighbors[j] if k in position
        ]
        ids = [self.ids[j] for j in keep] if self.ids is not None else None
        return SpatialWeights.from_pairs(len(keep), pairs, ids)


def lattice_queen(nrows: int, ncols: int) -> SpatialWeights:
    """Queen weights on a regular grid; unit index is row * ncols + col."""
    pairs = []
    for r in range(nrows):
        for c in range(ncols):
            j = r * ncols + c
            for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < nrows and 0 <= cc < ncols:
                    pairs.append((j, rr * ncols + cc))
    return SpatialWeights.from_pairs(nrows * ncols, pairs)


def _tract_rings_plane(tract: CensusTract, ref: GeoPoint) -> List[np.ndarray]:
    rings = []
    for part in tract.geometry:
        for ring in part.ring_arrays:
            x, y = project_arrays(ring[:, 0], ring[:, 1], ref)
            rings.append(np.column_stack([x, y]))
    return rings


def _min_vertex_segment_distance(points: np.ndarray, rings: List[np.ndarray]) -> float:
    best = np.inf
    for ring in rings:
        a = ring
        b = np.roll(ring, -1, axis=0)
        ab = b - a
        denom = np.maximum((ab ** 2).sum(axis=1), 1e-18)
        ap = points[:, None, :] - a[None, :, :]
        t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
        closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
        d = np.sqrt(((points[:, None, :] - closest) ** 2).sum(axis=2))
        best = min(best, float(d.min()))
    return best


def queen_contiguity(
    tracts: Sequence[CensusTract],
    snap_tol: float = DEFAULT_SNAP_TOL_M
) -> SpatialWeights:
    """
    Queen contiguity: two tracts are neighbours when their boundaries share
    at least one point, after snapping coordinates within `snap_tol` meters.

    Shared vertices are found with a KD-tree over all ring vertices; a
    vertex lying on another tract's edge interior (T-junction) is caught by
    an exact point-to-segment check on bounding-box candidates.

    Args:
        tracts: Tracts in unit order
        snap_tol: Snapping tolerance in meters

    Returns:
        SpatialWeights with ids set to the tract ids
    """
    n = len(tracts)
    if n == 0:
        raise ValueError("queen contiguity needs at least one tract")

    ref = GeoPoint(
        float(np.mean([t.centroid.lon for t in tracts])),
        float(np.mean([t.centroid.lat for t in tracts])),
    )
    rings = [_tract_rings_plane(t, ref) for t in tracts]
    vertices = [np.vstack(r) for r in rings]
    owner = np.concatenate([np.full(len(v), j) for j, v in enumerate(vertices)])

    # Shared vertices
    pairs: Set[Tuple[int, int]] = set()
    tree = cKDTree(np.vstack(vertices))
    for a, b in tree.query_pairs(r=snap_tol):
        j, k = int(owner[a]), int(owner[b])
        if j != k:
            pairs.add((min(j, k), max(j, k)))

    # T-junctions among overlapping bounding boxes
    boxes = np.array([
        [v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()] for v in vertices
    ])
    lo = boxes[:, :2] - snap_tol
    hi = boxes[:, 2:] + snap_tol
    overlap = (
        (lo[:, None, 0] <= hi[None, :, 0]) & (lo[None, :, 0] <= hi[:, None, 0])
        & (lo[:, None, 1] <= hi[None, :, 1]) & (lo[None, :, 1] <= hi[:, None, 1])
    )
    candidates = np.argwhere(np.triu(overlap, k=1))
    for j, k in candidates:
        j, k = int(j), int(k)
        if (j, k) in pairs:
            continue
        if (_min_vertex_segment_distance(vertices[j], rings[k]) <= snap_tol
                or _min_vertex_segment_distance(vertices[k], rings[j]) <= snap_tol):
            pairs.add((j, k))

    weights = SpatialWeights.from_pairs(n, sorted(pairs), [t.tract_id for t in tracts])
    if weights.islands:
        logger.warning(f"{len(weights.islands)} tracts have no queen neighbours")
    logger.info(
        f"Queen contiguity: {n} units, mean {weights.cardinalities.mean():.2f} neighbours"
    )
    return weights

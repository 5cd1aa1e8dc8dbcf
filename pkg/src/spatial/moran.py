"""
Local Moran's I with conditional-permutation inference.

The default ("weighted") form normalises each unit by the weighted sum of its
neighbours' squared deviations:

    I_j = (n - 1) * (y_j - ybar) / sum_k w_jk (y_k - ybar)^2 * sum_k w_jk (y_k - ybar)

"paper" is accepted as another name for it. The "conventional" form uses
m2 = sum_k (y_k - ybar)^2 / (n - 1) instead.

Pseudo p-values always come from the conventional statistic, whatever form
is reported: with y_j held fixed it ranks how extreme the neighbourhood sum
is, while the weighted denominator cancels exactly that signal inside a
uniform block.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.ingest.tracts import CensusTract, write_tracts
from src.spatial.weights import SpatialWeights

logger = logging.getLogger(__name__)

MORAN_VARIANTS = ("weighted", "conventional")
VARIANT_ALIASES = {"paper": "weighted"}
MIN_PERMUTATIONS = 99


class Cluster(str, Enum):
    HH = "HH"
    LL = "LL"
    HL = "HL"
    LH = "LH"
    NOT_SIGNIFICANT = "NotSignificant"
    ISOLATED = "Isolated"


@dataclass
class MoranResult:
    """Per-unit statistic, pseudo p-value and cluster label."""
    I: np.ndarray
    p_value: np.ndarray
    cluster: List[Cluster]
    n_perm: int
    seed: int
    alpha: float
    variant: str

    @property
    def significant_fraction(self) -> float:
        labels = {Cluster.HH, Cluster.LL, Cluster.HL, Cluster.LH}
        return sum(1 for c in self.cluster if c in labels) / len(self.cluster)

    def to_frame(self, ids: Sequence[str], y: Sequence[float]) -> pd.DataFrame:
        """Tabular export: tract_id, y, I, p_value, cluster."""
        return pd.DataFrame({
            "tract_id": list(ids),
            "y": np.asarray(y, dtype=float),
            "I": self.I,
            "p_value": self.p_value,
            "cluster": [c.value for c in self.cluster],
        })


def normalize_variant(variant: str) -> str:
    """Canonical variant name; raises on anything unknown."""
    variant = VARIANT_ALIASES.get(variant, variant)
    if variant not in MORAN_VARIANTS:
        raise ValueError(
            f"unknown Moran variant {variant!r}; expected one of "
            f"{MORAN_VARIANTS + tuple(VARIANT_ALIASES)}"
        )
    return variant


def _check_inputs(y, w: SpatialWeights) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != w.n:
        raise ValueError(f"length mismatch: {len(y)} values for {w.n} spatial units")
    if w.n < 2:
        raise ValueError("Local Moran's I needs at least 2 units")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    if np.all(y == y[0]):
        raise ValueError("zero variance")
    return y


def _statistic(z_j: float, neighbour_devs: np.ndarray, n: int, variant: str, m2: float) -> np.ndarray:
    """I_j for each row of neighbour deviations; NaN where undefined."""
    s1 = neighbour_devs.sum(axis=-1)
    if variant == "weighted":
        s2 = (neighbour_devs ** 2).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (n - 1) * z_j * s1 / s2
        return np.where(s2 > 0, out, np.nan)
    return z_j / m2 * s1


def local_morans_i(y, w: SpatialWeights, variant: str = "weighted") -> np.ndarray:
    """
    Local Moran's I for every unit.

    Args:
        y: One value per unit
        w: Binary spatial weights
        variant: "weighted" (weighted neighbour denominator) or "conventional"

    Returns:
        Array of I_j; NaN marks units where the statistic is undefined
        (no neighbours, or zero denominator)

    Raises:
        ValueError: length mismatch, fewer than 2 units, or constant y
    """
    variant = normalize_variant(variant)
    y = _check_inputs(y, w)
    n = len(y)
    z = y - y.mean()
    m2 = (z ** 2).sum() / (n - 1)

    out = np.full(n, np.nan)
    for j, nbrs in enumerate(w.neighbors):
        if nbrs:
            out[j] = _statistic(z[j], z[list(nbrs)], n, variant, m2)
    return out


def _draw_without_replacement(rng: np.random.Generator, m: int, k: int, size: int) -> np.ndarray:
    """`size` independent draws of k distinct indices from range(m)."""
    chosen = np.empty((size, k), dtype=np.int64)
    for t in range(k):
        r = rng.integers(0, m - t, size=size)
        # shift past indices already taken, smallest first
        taken = np.sort(chosen[:, :t], axis=1)
        for c in range(t):
            r += taken[:, c] <= r
        chosen[:, t] = r
    return chosen


def _permute_units(
    units: Sequence[int],
    z: np.ndarray,
    neighbors: Sequence[Sequence[int]],
    n_perm: int,
    seed: int,
    m2: float
) -> List[float]:
    n = len(z)
    p_values = []
    for j in units:
        nbrs = list(neighbors[j])
        if not nbrs:
            p_values.append(1.0)
            continue
        observed = float(_statistic(z[j], z[nbrs][None, :], n, "conventional", m2)[0])

        rng = np.random.default_rng([seed, j])
        others = np.delete(z, j)
        idx = _draw_without_replacement(rng, n - 1, len(nbrs), n_perm)
        simulated = _statistic(z[j], others[idx], n, "conventional", m2)
        extreme = int(np.sum(np.abs(simulated) >= abs(observed)))
        p_values.append((extreme + 1.0) / (n_perm + 1.0))
    return p_values


def moran_permutation(
    y,
    w: SpatialWeights,
    n_perm: int = 999,
    seed: int = 0,
    alpha: float = 0.05,
    variant: str = "weighted",
    n_jobs: int = 1
) -> MoranResult:
    """
    Local Moran's I with conditional-permutation pseudo p-values.

    For each unit j, y_j stays fixed while n_perm random draws of the other
    values are placed on j's neighbour positions. The two-sided pseudo
    p-value is (#{|I_perm| >= |I_obs|} + 1) / (n_perm + 1), computed on the
    conventional statistic. Each unit draws from its own generator seeded
    by (seed, j), so results do not depend on n_jobs.

    Args:
        y: One value per unit
        w: Binary spatial weights
        n_perm: Permutations per unit (at least 99)
        seed: Non-negative master seed
        alpha: Significance level for cluster labels
        variant: Reported form, "weighted" (alias "paper") or "conventional"
        n_jobs: joblib workers

    Returns:
        MoranResult; units whose reported I is undefined get p = 1
    """
    stats = local_morans_i(y, w, variant)
    variant = normalize_variant(variant)
    if n_perm < MIN_PERMUTATIONS:
        raise ValueError(f"n_perm must be at least {MIN_PERMUTATIONS}, got {n_perm}")
    if seed < 0:
        raise ValueError("seed must be non-negative")

    y = np.asarray(y, dtype=float)
    n = len(y)
    z = y - y.mean()
    m2 = (z ** 2).sum() / (n - 1)

    # Split units into chunks for the workers
    n_chunks = max(1, min(n, 4 * max(1, n_jobs)))
    chunks = [list(c) for c in np.array_split(np.arange(n), n_chunks) if len(c)]
    batches = Parallel(n_jobs=n_jobs)(
        delayed(_permute_units)(chunk, z, w.neighbors, n_perm, seed, m2)
        for chunk in chunks
    )
    p_values = np.array([p for batch in batches for p in batch], dtype=float)
    p_values[np.isnan(stats)] = 1.0

    # Label quadrants of significant units
    clusters: List[Cluster] = []
    for j, nbrs in enumerate(w.neighbors):
        if not nbrs:
            clusters.append(Cluster.ISOLATED)
        elif np.isnan(stats[j]) or p_values[j] > alpha:
            clusters.append(Cluster.NOT_SIGNIFICANT)
        else:
            own = "H" if z[j] > 0 else "L"
            lag = "H" if z[list(nbrs)].mean() > 0 else "L"
            clusters.append(Cluster(own + lag))

    result = MoranResult(
        I=stats, p_value=p_values, cluster=clusters,
        n_perm=n_perm, seed=seed, alpha=alpha, variant=variant,
    )
    logger.info(
        f"Local Moran ({variant}, {n_perm} permutations): "
        f"{result.significant_fraction:.1%} of {n} units significant at {alpha}"
    )
    return result


def moran_properties(result: MoranResult, ids: Sequence[str], y: Sequence[float]) -> Dict[str, Dict]:
    """Per-tract GeoJSON properties; undefined statistics become null."""
    y = np.asarray(y, dtype=float)
    return {
        tract_id: {
            "y": float(y[j]),
            "I": None if np.isnan(result.I[j]) else float(result.I[j]),
            "p_value": float(result.p_value[j]),
            "cluster": result.cluster[j].value,
        }
        for j, tract_id in enumerate(ids)
    }


def write_moran_outputs(
    result: MoranResult,
    tracts: Sequence[CensusTract],
    y: Sequence[float],
    out_dir: Union[str, Path]
) -> Tuple[Path, Path]:
    """
    Cluster map as GeoJSON (tract geometry plus y, I, p_value, cluster)
    and the same columns as CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = [t.tract_id for t in tracts]
    geojson_path = out / "moran.geojson"
    csv_path = out / "moran.csv"
    write_tracts(tracts, geojson_path, moran_properties(result, ids, y))
    result.to_frame(ids, y).to_csv(csv_path, index=False, lineterminator="\n")
    return geojson_path, csv_path

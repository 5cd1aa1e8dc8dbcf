"""
SMOTE oversampling: synthetic minority rows interpolated between a
minority row and one of its k nearest minority neighbours.
"""

import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)


class SmoteConfig(BaseModel):
    k_neighbors: int = Field(default=5, ge=1)
    target_ratio: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    # one interpolation factor per feature instead of one per sample
    per_feature: bool = False


def n_needed_for_ratio(n_minority: int, n_majority: int, target_ratio: float) -> int:
    """Synthetic rows needed so that minority / majority reaches target_ratio."""
    return max(0, int(round(target_ratio * n_majority)) - n_minority)


def _standardize(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def nearest_minority_neighbors(X_minority: np.ndarray, k: int) -> np.ndarray:
    """
    Indices of each row's k nearest other minority rows (Euclidean distance
    on z-scored features), shape (n, k).
    """
    Z, _, _ = _standardize(X_minority)
    tree = cKDTree(Z)
    _, idx = tree.query(Z, k=k + 1)
    idx = np.atleast_2d(idx)
    neighbours = np.empty((len(Z), k), dtype=int)
    for i in range(len(Z)):
        # duplicates may rank ahead of the row itself
        others = [j for j in idx[i] if j != i]
        neighbours[i] = others[:k]
    return neighbours


def smote_oversample(X_minority: np.ndarray, cfg: SmoteConfig, n_needed: int) -> np.ndarray:
    """
    Generate `n_needed` synthetic minority rows.

    Each row is base + u * (neighbour - base) where the base is drawn
    uniformly from the minority rows, the neighbour uniformly from the
    base's k nearest minority neighbours and u ~ U[0, 1] (one scalar per
    sample, or one per feature when cfg.per_feature is set).

    Args:
        X_minority: Minority rows, shape (n, d), n >= 2
        cfg: SMOTE settings
        n_needed: Number of rows to emit

    Returns:
        Array of shape (n_needed, d) on the original feature scale
    """
    X_minority = np.asarray(X_minority, dtype=float)
    if X_minority.ndim != 2 or len(X_minority) < 2:
        raise ValueError("SMOTE needs at least 2 minority rows")
    if n_needed < 0:
        raise ValueError("n_needed must be non-negative")
    n, d = X_minority.shape
    if n_needed == 0:
        return np.empty((0, d))

    k = min(cfg.k_neighbors, n - 1)
    neighbours = nearest_minority_neighbors(X_minority, k)

    rng = np.random.default_rng(cfg.seed)
    base = rng.integers(0, n, size=n_needed)
    pick = neighbours[base, rng.integers(0, k, size=n_needed)]
    if cfg.per_feature:
        u = rng.random((n_needed, d))
    else:
        u = rng.random((n_needed, 1))

    synthetic = X_minority[base] + u * (X_minority[pick] - X_minority[base])
    logger.debug(f"SMOTE generated {n_needed} rows from {n} minority rows (k={k})")
    return synthetic


def smote_balance(X: np.ndarray, y: np.ndarray, cfg: SmoteConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Oversample the minority class of a binary table up to cfg.target_ratio.

    Original rows are returned untouched and in order; synthetic rows are
    appended after them.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        logger.warning("SMOTE skipped: only one class present")
        return X, y
    minority = classes[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    if n_min < 2:
        logger.warning("SMOTE skipped: fewer than 2 minority rows")
        return X, y

    n_needed = n_needed_for_ratio(int(n_min), int(n_maj), cfg.target_ratio)
    synthetic = smote_oversample(X[y == minority], cfg, n_needed)
    X_out = np.vstack([X, synthetic])
    y_out = np.concatenate([y, np.full(len(synthetic), minority, dtype=int)])
    return X_out, y_out

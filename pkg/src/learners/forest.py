"""
Random forest of CART regression trees. On 0/1 labels each leaf holds the
positive fraction of its rows, so the forest mean is a probability.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from src.learners.tree import DecisionTree, fit_tree

logger = logging.getLogger(__name__)


class ForestParams(BaseModel):
    n_trees: int = Field(default=200, ge=1)
    max_depth: int = Field(default=12, ge=1)
    # None means ceil(sqrt(d))
    features_per_split: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    bootstrap: bool = True
    seed: int = Field(default=0, ge=0)


@dataclass
class ForestModel:
    trees: List[DecisionTree]
    tree_seeds: List[int]
    features_per_split: int
    n_features: int
    bootstrap: bool
    feature_names: Optional[List[str]] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, got {X.shape}"
            )
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)


def tree_seed(seed: int, t: int) -> int:
    """Seed of tree t, independent of how trees are spread over workers."""
    return int(np.random.SeedSequence([seed, t]).generate_state(1)[0])


def _fit_one(X: np.ndarray, y: np.ndarray, params: ForestParams, m: int, seed: int) -> DecisionTree:
    rng = np.random.default_rng(seed)
    if params.bootstrap:
        rows = rng.integers(0, len(X), size=len(X))
        X, y = X[rows], y[rows]
    return fit_tree(
        X, y, max_depth=params.max_depth, min_samples_leaf=params.min_samples_leaf,
        max_features=m, rng=rng,
    )


def rf_fit(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[ForestParams] = None,
    n_jobs: int = 1,
    feature_names: Optional[List[str]] = None
) -> ForestModel:
    """
    Fit a random forest.

    Args:
        X: Features, shape (n, d)
        y: Targets; labels in {0, 1} for classification
        params: Forest hyperparameters
        n_jobs: joblib workers; the result does not depend on it
        feature_names: Optional column names stored with the model

    Returns:
        ForestModel
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit a forest on empty data")
    if len(y) != len(X):
        raise ValueError(f"length mismatch: {len(X)} rows, {len(y)} targets")

    d = X.shape[1]
    m = params.features_per_split or math.ceil(math.sqrt(d))
    m = min(m, d)
    seeds = [tree_seed(params.seed, t) for t in range(params.n_trees)]
    trees = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(X, y, params, m, s) for s in seeds)
    logger.debug(f"Random forest: {params.n_trees} trees, {m}/{d} features per split")
    return ForestModel(
        trees=list(trees), tree_seeds=seeds, features_per_split=m, n_features=d,
        bootstrap=params.bootstrap, feature_names=feature_names,
    )


def rf_predict(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean tree output (positive-class probability on 0/1 labels)."""
    return model.predict(X)

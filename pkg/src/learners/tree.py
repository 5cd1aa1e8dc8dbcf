"""
CART regression tree used as the base learner for boosting and forests.

Nodes live in parallel arrays (sklearn-style): node i is a leaf when
feature[i] == -1, otherwise rows with X[:, feature[i]] <= threshold[i] go to
left[i] and the rest to right[i].
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LEAF = -1


@dataclass
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_samples: np.ndarray
    n_features: int
    max_depth: int
    min_samples_leaf: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature != LEAF))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: tree expects {self.n_features} features, got {X.shape}"
            )
        rows = np.arange(len(X))
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            internal = f != LEAF
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_samples": self.n_samples.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DecisionTree":
        return cls(
            feature=np.array(data["feature"], dtype=int),
            threshold=np.array(data["threshold"], dtype=float),
            left=np.array(data["left"], dtype=int),
            right=np.array(data["right"], dtype=int),
            value=np.array(data["value"], dtype=float),
            gain=np.array(data["gain"], dtype=float),
            n_samples=np.array(data["n_samples"], dtype=int),
            n_features=int(data["n_features"]),
            max_depth=int(data["max_depth"]),
            min_samples_leaf=int(data["min_samples_leaf"]),
        )


def presort(X: np.ndarray) -> List[np.ndarray]:
    """Row order sorted by each feature (stable), reusable across fits."""
    return [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]


def _best_split_on_feature(xs: np.ndarray, ys: np.ndarray, min_samples_leaf: int):
    n = len(ys)
    csum = np.cumsum(ys)[:-1]
    total = csum[-1] + ys[-1] if n > 1 else ys[0]
    n_left = np.arange(1, n)
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
    if not valid.any():
        return None
    gain = csum ** 2 / n_left + (total - csum) ** 2 / (n - n_left) - total ** 2 / n
    gain = np.where(valid, gain, -np.inf)
    i = int(np.argmax(gain))
    threshold = (xs[i] + xs[i + 1]) / 2.0
    if threshold >= xs[i + 1]:
        threshold = xs[i]
    return float(gain[i]), float(threshold)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_leaf: int = 1,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    sorted_index: Optional[Sequence[np.ndarray]] = None
) -> DecisionTree:
    """
    Grow a regression tree by greedy squared-error reduction.

    Candidate thresholds are midpoints between consecutive distinct
    values. Among equal gains the lowest feature index wins, then the
    lowest threshold. A node becomes a leaf at max_depth, when it cannot
    hold two children of min_samples_leaf rows, or when no split reduces
    the error. Leaf value is the mean target.

    Args:
        X: Features, shape (n, d)
        y: Targets (residuals or gradients when boosting), shape (n,)
        max_depth: Maximum depth (root has depth 0)
        min_samples_leaf: Minimum rows per leaf
        max_features: Features sampled per split (None = all)
        rng: Generator for feature sampling
        sorted_index: Per-feature row orders restricted to the rows to use;
            defaults to all rows of X

    Returns:
        DecisionTree
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit a tree on empty data")
    if len(y) != len(X):
        raise ValueError(f"length mismatch: {len(X)} rows, {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    d = X.shape[1]
    if sorted_index is None:
        sorted_index = presort(X)
    m = d if max_features is None else max(1, min(d, max_features))
    if m < d and rng is None:
        rng = np.random.default_rng(0)

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    gain: List[float] = []
    n_samples: List[int] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        gain.append(0.0)
        n_samples.append(len(rows))
        return len(feature) - 1

    goes_left = np.zeros(len(X), dtype=bool)
    root = new_node(sorted_index[0])
    stack = [(root, list(sorted_index), 0)]

    while stack:
        node, orders, depth = stack.pop()
        rows = orders[0]
        n = len(rows)
        if depth >= max_depth or n < 2 * min_samples_leaf:
            continue
        y_node = y[rows]
        sse = float(((y_node - y_node.mean()) ** 2).sum())
        if sse <= 0.0:
            continue

        candidates = range(d) if m == d else np.sort(rng.choice(d, size=m, replace=False))
        best = None
        for f in candidates:
            order = orders[f]
            found = _best_split_on_feature(X[order, f], y[order], min_samples_leaf)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], found[1], int(f))
        if best is None or best[0] <= 1e-12 * sse:
            continue

        split_gain, split_threshold, f = best
        goes_left[rows] = X[rows, f] <= split_threshold
        left_orders = [o[goes_left[o]] for o in orders]
        right_orders = [o[~goes_left[o]] for o in orders]

        feature[node] = f
        threshold[node] = split_threshold
        gain[node] = split_gain
        left[node] = new_node(left_orders[0])
        right[node] = new_node(right_orders[0])
        stack.append((right[node], right_orders, depth + 1))
        stack.append((left[node], left_orders, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=int),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        value=np.array(value, dtype=float),
        gain=np.array(gain, dtype=float),
        n_samples=np.array(n_samples, dtype=int),
        n_features=d,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )

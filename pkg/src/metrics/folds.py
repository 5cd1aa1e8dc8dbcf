import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int
    stratified: bool

    @property
    def n(self) -> int:
        return len(self.assignments)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def splits(self) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        for fold in range(self.k):
            yield fold, self.train_index(fold), self.test_index(fold)


def fold_seed(seed: int, fold: int) -> int:
    """Seed for work done inside one fold, fixed by master seed and fold."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def kfold(n: int, k: int, seed: int = 0, labels: Optional[Sequence[int]] = None) -> FoldPlan:
    """
    Deterministic k-fold assignment.

    Rows are shuffled with the seed and dealt round-robin into folds. With
    labels, each class is shuffled separately and dealing continues where
    the previous class stopped, so both fold sizes and per-class counts
    differ by at most one.

    Args:
        n: Number of rows
        k: Number of folds, 2 <= k <= n
        seed: Shuffle seed
        labels: Optional class labels to stratify on

    Returns:
        FoldPlan
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ValueError(f"more folds than rows: k={k} > n={n}")

    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=int)
    if labels is None:
        order = rng.permutation(n)
        assignments[order] = np.arange(n) % k
    else:
        labels = np.asarray(labels)
        if len(labels) != n:
            raise ValueError(f"length mismatch: {n} rows, {len(labels)} labels")
        offset = 0
        for cls in np.unique(labels):
            members = np.flatnonzero(labels == cls)
            members = members[rng.permutation(len(members))]
            assignments[members] = (offset + np.arange(len(members))) % k
            offset += len(members)

    plan = FoldPlan(k=k, assignments=assignments, seed=seed, stratified=labels is not None)
    logger.debug(f"{'Stratified ' if plan.stratified else ''}{k}-fold plan over {n} rows")
    return plan

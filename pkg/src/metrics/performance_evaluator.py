import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocCurve:
    """
    ROC points ordered from threshold +inf (0, 0) down to the lowest score
    (1, 1). A row is predicted positive when its score >= threshold.
    """
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    def __len__(self) -> int:
        return len(self.thresholds)

    def trapezoid_area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def points(self) -> List[Tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")


def r_squared(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """
    Coefficient of determination 1 - SS_res / SS_tot (negative when the
    predictions are worse than the mean).

    Args:
        y: Observed values (at least 2, not all equal)
        y_hat: Predictions

    Returns:
        R² value

    Raises:
        ValueError: "zero variance" for constant y
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    _check_pair(y, y_hat)
    if len(y) < 2:
        raise ValueError("R² needs at least 2 observations")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("zero variance")
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Descending-score sweep; tied scores collapse into one point."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    _check_pair(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0 or n_pos + n_neg != len(labels):
        raise ValueError("ROC needs binary labels with both classes present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = labels[order] == 1
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(pos)[ends]
    fp = (ends + 1) - tp
    return RocCurve(
        thresholds=np.r_[np.inf, s[ends]],
        fpr=np.r_[0.0, fp / n_neg],
        tpr=np.r_[0.0, tp / n_pos],
    )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> Tuple[RocCurve, float]:
    """
    ROC curve and AUC, where AUC = P(score_pos > score_neg) + P(tie) / 2
    computed from average ranks (Mann-Whitney).

    Raises:
        ValueError: when only one class is present
    """
    curve = roc_curve(scores, labels)
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    ranks = rankdata(scores)
    auc = (ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return curve, float(auc)


def summarize_folds(values: Sequence[float]) -> Dict[str, float]:
    """Mean and population std of per-fold metric values."""
    arr = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if not len(arr):
        return {"mean": float("nan"), "std": float("nan"), "n": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": int(len(arr))}


def fold_r_squared(y: np.ndarray, y_hat: np.ndarray, folds: np.ndarray) -> List[float]:
    """R² within each fold; folds with constant targets give NaN."""
    values = []
    for f in np.unique(folds):
        mask = folds == f
        try:
            values.append(r_squared(y[mask], y_hat[mask]))
        except ValueError:
            values.append(float("nan"))
    return values


def fold_auc(scores: np.ndarray, labels: np.ndarray, folds: np.ndarray) -> List[float]:
    """AUC within each fold; single-class folds give NaN."""
    values = []
    for f in np.unique(folds):
        mask = folds == f
        try:
            values.append(roc_auc(scores[mask], labels[mask])[1])
        except ValueError:
            values.append(float("nan"))
    return values

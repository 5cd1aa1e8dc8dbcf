"""Split-gain feature importance for tree ensembles."""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from src.learners.boosting import GBMModel
from src.learners.forest import ForestModel

logger = logging.getLogger(__name__)


class ImportanceReport(BaseModel):
    feature_names: List[str]
    shares: List[float]
    has_splits: bool

    def ranking(self) -> List[Tuple[str, float]]:
        """Features by descending share; equal shares keep column order."""
        order = sorted(range(len(self.shares)), key=lambda i: (-self.shares[i], i))
        return [(self.feature_names[i], self.shares[i]) for i in order]

    def top(self) -> Optional[str]:
        return self.ranking()[0][0] if self.has_splits else None


def feature_importance(
    model: Union[GBMModel, ForestModel],
    feature_names: Optional[List[str]] = None
) -> ImportanceReport:
    """
    Total squared-error (or gradient) reduction per feature over every
    split of every tree, normalised to sum to 1.

    A model without splits yields all-zero shares and has_splits=False.
    """
    d = model.n_features
    names = feature_names or model.feature_names or [f"x{i}" for i in range(d)]
    if len(names) != d:
        raise ValueError(f"dimension mismatch: {len(names)} names for {d} features")

    totals = np.zeros(d)
    for tree in model.trees:
        internal = tree.feature >= 0
        np.add.at(totals, tree.feature[internal], tree.gain[internal])

    total = totals.sum()
    if total <= 0:
        logger.warning("Model has no splits; importance is all zero")
        return ImportanceReport(feature_names=list(names), shares=[0.0] * d, has_splits=False)
    return ImportanceReport(feature_names=list(names), shares=(totals / total).tolist(), has_splits=True)

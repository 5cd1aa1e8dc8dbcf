"""
Gradient boosting with squared or logistic loss.

Each stage fits a regression tree to the negative gradient of the loss
(residuals for squared loss, y - sigmoid(F) for logistic loss) and adds
learning_rate times its output to the running score.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import expit

from src.learners.tree import DecisionTree, fit_tree, presort

logger = logging.getLogger(__name__)

# Log-odds clamp for single-class or near-single-class input
PROBABILITY_CLAMP = 1e-6


class GBMParams(BaseModel):
    n_trees: int = Field(default=300, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    max_depth: int = Field(default=3, ge=1)
    min_samples_leaf: int = Field(default=20, ge=1)
    loss: Literal["squared", "logistic"] = "squared"
    # row fraction drawn per stage; below 1.0 the loss is no longer monotone
    subsample: float = Field(default=1.0, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)


@dataclass
class GBMModel:
    trees: List[DecisionTree]
    learning_rate: float
    init_value: float
    loss: str
    n_features: int
    feature_names: Optional[List[str]] = None
    train_loss: List[float] = field(default_factory=list)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Additive score init_value + learning_rate * sum of tree outputs."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, got {X.shape}"
            )
        score = np.full(len(X), self.init_value, dtype=float)
        for tree in self.trees:
            score += self.learning_rate * tree.predict(X)
        return score

    def predict(self, X: np.ndarray) -> np.ndarray:
        score = self.decision_function(X)
        return expit(score) if self.loss == "logistic" else score


def _loss(y: np.ndarray, score: np.ndarray, loss: str) -> float:
    if loss == "logistic":
        return float(np.mean(np.logaddexp(0.0, score) - y * score))
    return float(0.5 * np.mean((y - score) ** 2))


def _negative_gradient(y: np.ndarray, score: np.ndarray, loss: str) -> np.ndarray:
    if loss == "logistic":
        return y - expit(score)
    return y - score


def gbm_fit(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[GBMParams] = None,
    feature_names: Optional[List[str]] = None
) -> GBMModel:
    """
    Fit a boosted tree ensemble.

    Args:
        X: Features, shape (n, d)
        y: Real targets (squared loss) or labels in {0, 1} (logistic loss)
        params: Boosting hyperparameters
        feature_names: Optional column names stored with the model

    Returns:
        GBMModel with per-stage training loss in `train_loss`
    """
    params = params or GBMParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit boosting on empty data")
    if len(y) != len(X):
        raise ValueError(f"length mismatch: {len(X)} rows, {len(y)} targets")

    n_trees = params.n_trees
    if params.loss == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic loss needs labels in {0, 1}")
        p = float(np.clip(y.mean(), PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP))
        init_value = float(np.log(p / (1.0 - p)))
        if y.min() == y.max():
            logger.warning(f"Single-class input ({int(y[0])}): boosting stops at clamped log-odds")
            n_trees = 0
    else:
        init_value = float(y.mean())

    model = GBMModel(
        trees=[], learning_rate=params.learning_rate, init_value=init_value,
        loss=params.loss, n_features=X.shape[1], feature_names=feature_names,
    )
    score = np.full(len(X), init_value)
    model.train_loss.append(_loss(y, score, params.loss))

    orders = presort(X)
    rng = np.random.default_rng(params.seed)
    n_sub = max(1, int(round(params.subsample * len(X))))

    for stage in range(n_trees):
        gradient = _negative_gradient(y, score, params.loss)
        if params.subsample < 1.0:
            in_bag = np.zeros(len(X), dtype=bool)
            in_bag[rng.choice(len(X), size=n_sub, replace=False)] = True
            sorted_index = [o[in_bag[o]] for o in orders]
        else:
            sorted_index = orders
        tree = fit_tree(
            X, gradient, max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf, sorted_index=sorted_index,
        )
        model.trees.append(tree)
        score += params.learning_rate * tree.predict(X)
        model.train_loss.append(_loss(y, score, params.loss))

        if (stage + 1) % 50 == 0:
            logger.debug(f"Boosting stage {stage + 1}/{n_trees}: train loss {model.train_loss[-1]:.6f}")

    return model


def gbm_predict(model: GBMModel, X: np.ndarray) -> np.ndarray:
    """Real scores (squared loss) or probabilities in (0, 1) (logistic loss)."""
    return model.predict(X)

"""
L2-penalised logistic regression fitted by Newton steps (IRLS).

The objective on standardised features Z is

    J(b, w) = mean(log(1 + exp(s)) - y * s) + l2 / 2 * ||w||^2,   s = b + Z w

with the intercept left unpenalised.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import expit

logger = logging.getLogger(__name__)


class LogisticParams(BaseModel):
    l2: float = Field(default=1e-4, ge=0.0)
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    # standardised-space parameters [b, w] and the scaling that produced them
    theta: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    l2: float
    converged: bool
    n_iter: int
    grad_norm: float
    feature_names: Optional[List[str]] = None

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"dimension mismatch: model expects {self.n_features} features, got {X.shape}"
            )
        return X @ self.weights + self.intercept

    def predict(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_scale


def logistic_objective(theta: np.ndarray, Z: np.ndarray, y: np.ndarray, l2: float) -> Tuple[float, np.ndarray]:
    """
    Penalised mean log-loss and its gradient.

    Args:
        theta: [intercept, weights...] in standardised space
        Z: Standardised features, shape (n, d)
        y: Labels in {0, 1}
        l2: Penalty on the weights

    Returns:
        (objective value, gradient with the shape of theta)
    """
    b, w = theta[0], theta[1:]
    s = b + Z @ w
    value = float(np.mean(np.logaddexp(0.0, s) - y * s) + 0.5 * l2 * w @ w)
    r = (expit(s) - y) / len(y)
    grad = np.concatenate([[r.sum()], Z.T @ r + l2 * w])
    return value, grad


def _hessian(theta: np.ndarray, Za: np.ndarray, l2: float) -> np.ndarray:
    p = expit(Za @ theta)
    weights = p * (1.0 - p) / len(Za)
    H = Za.T @ (Za * weights[:, None])
    H[1:, 1:] += l2 * np.eye(len(theta) - 1)
    return H


def logistic_fit(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[LogisticParams] = None,
    feature_names: Optional[List[str]] = None
) -> LinearModel:
    """
    Fit logistic regression by damped Newton iterations.

    Stops when the gradient norm drops below params.tol. When max_iter
    is reached first, a warning is logged and the best iterate is kept.
    """
    params = params or LogisticParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("cannot fit logistic regression on empty data")
    if len(y) != len(X):
        raise ValueError(f"length mismatch: {len(X)} rows, {len(y)} targets")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic regression needs labels in {0, 1}")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    Za = np.column_stack([np.ones(len(Z)), Z])

    theta = np.zeros(Z.shape[1] + 1)
    value, grad = logistic_objective(theta, Z, y, params.l2)
    converged = False
    n_iter = 0
    for n_iter in range(1, params.max_iter + 1):
        if np.linalg.norm(grad) < params.tol:
            converged = True
            n_iter -= 1
            break
        H = _hessian(theta, Za, params.l2)
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)

        t = 1.0
        while True:
            candidate = theta - t * step
            cand_value, cand_grad = logistic_objective(candidate, Z, y, params.l2)
            if cand_value <= value - 1e-4 * t * grad @ step or t < 1e-10:
                break
            t *= 0.5
        if cand_value > value:
            break
        theta, value, grad = candidate, cand_value, cand_grad
    else:
        converged = np.linalg.norm(grad) < params.tol

    grad_norm = float(np.linalg.norm(grad))
    if not converged:
        logger.warning(
            f"Logistic regression did not converge in {params.max_iter} iterations "
            f"(gradient norm {grad_norm:.3e})"
        )

    weights = theta[1:] / scale
    intercept = float(theta[0] - np.sum(theta[1:] * mean / scale))
    return LinearModel(
        weights=weights, intercept=intercept, theta=theta, feature_mean=mean,
        feature_scale=scale, l2=params.l2, converged=bool(converged), n_iter=n_iter,
        grad_norm=grad_norm, feature_names=feature_names,
    )


def logistic_predict(model: LinearModel, X: np.ndarray) -> np.ndarray:
    return model.predict(X)

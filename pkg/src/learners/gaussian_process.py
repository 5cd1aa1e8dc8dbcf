"""
Exact Gaussian-Process regression with an RBF kernel on projected tract
centroids, used to model the residuals of the boosting stage.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

from src.geo.geometry import PlanePoint

logger = logging.getLogger(__name__)

JITTER_FACTOR = 1e-8
JITTER_RETRIES = 3
LENGTHSCALE_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
NOISE_RATIOS = (0.01, 0.1, 0.5, 1.0)

Inputs = Union[np.ndarray, Sequence[PlanePoint]]


@dataclass(frozen=True)
class RBFKernel:
    variance: float
    lengthscale: float
    noise: float

    def __post_init__(self):
        if self.variance <= 0 or self.lengthscale <= 0:
            raise ValueError("kernel variance and lengthscale must be positive")
        if self.noise < 0:
            raise ValueError("kernel noise must be non-negative")


@dataclass
class GPModel:
    train_inputs: np.ndarray
    alpha: np.ndarray
    chol: np.ndarray
    kernel: RBFKernel
    input_mean: np.ndarray
    input_scale: np.ndarray
    y_mean: float
    noise_used: float
    log_marginal_likelihood: float

    @property
    def scaled_lengthscale(self) -> float:
        return self.kernel.lengthscale / float(self.input_scale[0])


def as_plane_array(points: Inputs) -> np.ndarray:
    """(n, 2) float array from an array or a sequence of PlanePoint."""
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        points = list(points)
        if points and isinstance(points[0], PlanePoint):
            arr = np.array([[p.x, p.y] for p in points], dtype=float)
        else:
            arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"dimension mismatch: expected planar points of shape (n, 2), got {arr.shape}")
    return arr


def rbf_kernel(a: PlanePoint, b: PlanePoint, variance: float, lengthscale: float) -> float:
    """variance * exp(-|a - b|^2 / (2 lengthscale^2))."""
    d2 = (a.x - b.x) ** 2 + (a.y - b.y) ** 2
    return float(variance * np.exp(-d2 / (2.0 * lengthscale ** 2)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, variance: float, lengthscale: float) -> np.ndarray:
    """Kernel matrix between two point sets in the same units as lengthscale."""
    return variance * np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * lengthscale ** 2))


def _factorize(K: np.ndarray, noise: float, jitter: float) -> Tuple[np.ndarray, float]:
    noise_used = max(noise, jitter)
    for attempt in range(JITTER_RETRIES + 1):
        try:
            L = cholesky(K + noise_used * np.eye(len(K)), lower=True)
            return L, noise_used
        except LinAlgError:
            if attempt == JITTER_RETRIES:
                break
            jitter *= 10.0
            noise_used = noise + jitter
            logger.warning(f"Cholesky failed, retrying with jitter {jitter:.3e}")
    raise ValueError("GP covariance is not positive definite after jitter retries")


def log_marginal_likelihood(L: np.ndarray, alpha: np.ndarray, y_centered: np.ndarray) -> float:
    """-1/2 y^T alpha - sum(log diag L) - n/2 log(2 pi)."""
    n = len(y_centered)
    return float(-0.5 * y_centered @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2.0 * np.pi))


def gp_fit(X: Inputs, y: np.ndarray, kernel: RBFKernel) -> GPModel:
    """
    Condition a zero-mean GP on centred targets.

    Inputs are shifted by their mean and divided by one shared scale so the
    kernel stays isotropic; the lengthscale is given in input units.

    Args:
        X: Planar inputs in meters, shape (n, 2)
        y: Targets (stage-1 residuals)
        kernel: RBF hyperparameters

    Returns:
        GPModel

    Raises:
        ValueError: on empty input, length mismatch, or a covariance that
            stays indefinite after jitter retries
    """
    X = as_plane_array(X)
    y = np.asarray(y, dtype=float)
    if len(X) == 0:
        raise ValueError("cannot fit a GP on empty data")
    if len(y) != len(X):
        raise ValueError(f"length mismatch: {len(X)} inputs, {len(y)} targets")

    mean = X.mean(axis=0)
    spread = float(np.std(X - mean))
    scale = spread if spread > 0 else 1.0
    Xs = (X - mean) / scale
    ls = kernel.lengthscale / scale

    y_mean = float(y.mean())
    yc = y - y_mean
    K = rbf_matrix(Xs, Xs, kernel.variance, ls)
    L, noise_used = _factorize(K, kernel.noise, JITTER_FACTOR * kernel.variance)
    alpha = cho_solve((L, True), yc)
    return GPModel(
        train_inputs=Xs, alpha=alpha, chol=L, kernel=kernel,
        input_mean=mean, input_scale=np.array([scale, scale]), y_mean=y_mean,
        noise_used=noise_used, log_marginal_likelihood=log_marginal_likelihood(L, alpha, yc),
    )


def gp_predict(model: GPModel, X_star: Inputs, return_var: bool = False):
    """
    Posterior mean (plus variance of the latent function when return_var).

    Returns:
        means, or (means, variances)
    """
    X_star = as_plane_array(X_star)
    Xs = (X_star - model.input_mean) / model.input_scale
    K_star = rbf_matrix(Xs, model.train_inputs, model.kernel.variance, model.scaled_lengthscale)
    mean = K_star @ model.alpha + model.y_mean
    if not return_var:
        return mean
    v = solve_triangular(model.chol, K_star.T, lower=True)
    var = model.kernel.variance - np.sum(v ** 2, axis=0)
    return mean, np.maximum(var, 0.0)


def median_pairwise_distance(X: Inputs) -> float:
    X = as_plane_array(X)
    if len(X) < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


def select_gp_hyperparameters(
    X: Inputs,
    y: np.ndarray,
    lengthscale_factors: Iterable[float] = LENGTHSCALE_FACTORS,
    noise_ratios: Iterable[float] = NOISE_RATIOS
) -> Tuple[RBFKernel, float]:
    """
    Grid search maximising the log marginal likelihood.

    Lengthscales are multiples of the median pairwise input distance; for
    a noise ratio r the signal variance is var(y) / (1 + r) and the noise
    r times that. The first grid point wins ties.

    Returns:
        (best kernel, its log marginal likelihood)
    """
    X = as_plane_array(X)
    y = np.asarray(y, dtype=float)
    base = median_pairwise_distance(X)
    var_y = max(float(np.var(y)), 1e-12)

    best: Optional[Tuple[RBFKernel, float]] = None
    for factor in lengthscale_factors:
        for ratio in noise_ratios:
            variance = var_y / (1.0 + ratio)
            kernel = RBFKernel(variance=variance, lengthscale=factor * base, noise=ratio * variance)
            try:
                lml = gp_fit(X, y, kernel).log_marginal_likelihood
            except ValueError:
                continue
            if best is None or lml > best[1]:
                best = (kernel, lml)
    if best is None:
        raise ValueError("no GP hyperparameter setting could be fitted")
    logger.debug(
        f"GP hyperparameters: lengthscale {best[0].lengthscale:.1f} m, "
        f"noise ratio {best[0].noise / best[0].variance:.2f}, LML {best[1]:.3f}"
    )
    return best

import numpy as np
import pytest

from src.geo.geometry import PlanePoint
from src.learners.gaussian_process import (
    RBFKernel,
    gp_fit,
    gp_predict,
    median_pairwise_distance,
    rbf_kernel,
    rbf_matrix,
    select_gp_hyperparameters,
)


def test_kernel_identities():
    a, b = PlanePoint(0.0, 0.0), PlanePoint(300.0, 400.0)
    assert rbf_kernel(a, a, 2.5, 100.0) == 2.5
    assert rbf_kernel(a, b, 1.0, 500.0) == pytest.approx(np.exp(-0.5))
    assert rbf_kernel(a, b, 1.0, 500.0) == rbf_kernel(b, a, 1.0, 500.0)


def test_kernel_matrix_is_symmetric_psd(rng):
    X = rng.uniform(0, 1000, size=(30, 2))
    K = rbf_matrix(X, X, 1.0, 200.0)
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-9


@pytest.mark.parametrize("n", [1, 3, 8])
def test_posterior_matches_dense_inverse(rng, n):
    X = rng.uniform(0, 2000, size=(n, 2))
    y = rng.normal(size=n)
    kernel = RBFKernel(variance=1.3, lengthscale=600.0, noise=0.1)
    X_star = rng.uniform(0, 2000, size=(5, 2))

    K = rbf_matrix(X, X, kernel.variance, kernel.lengthscale) + kernel.noise * np.eye(n)
    K_star = rbf_matrix(X_star, X, kernel.variance, kernel.lengthscale)
    K_inv = np.linalg.inv(K)
    expected_mean = K_star @ K_inv @ (y - y.mean()) + y.mean()
    expected_var = kernel.variance - np.einsum("ij,jk,ik->i", K_star, K_inv, K_star)

    mean, var = gp_predict(gp_fit(X, y, kernel), X_star, return_var=True)
    assert np.allclose(mean, expected_mean, atol=1e-9)
    assert np.allclose(var, expected_var, atol=1e-9)


def test_single_training_point():
    model = gp_fit(np.array([[10.0, 20.0]]), np.array([2.0]), RBFKernel(1.0, 100.0, 0.1))
    assert gp_predict(model, np.array([[10.0, 20.0], [500.0, 0.0]])) == pytest.approx([2.0, 2.0])


def test_far_from_data_reverts_to_mean(rng):
    X = rng.uniform(0, 1000, size=(20, 2))
    y = rng.normal(loc=4.0, size=20)
    kernel = RBFKernel(1.0, 150.0, 0.05)
    mean, var = gp_predict(gp_fit(X, y, kernel), np.array([[1e6, 1e6]]), return_var=True)
    assert mean[0] == pytest.approx(y.mean())
    assert var[0] == pytest.approx(kernel.variance)


def test_variance_smaller_near_data(rng):
    X = rng.uniform(0, 1000, size=(15, 2))
    model = gp_fit(X, rng.normal(size=15), RBFKernel(1.0, 200.0, 0.01))
    _, var = gp_predict(model, np.vstack([X[:1], [[5000.0, 5000.0]]]), return_var=True)
    assert var[0] < 0.05 < var[1]


def test_accepts_plane_points():
    points = [PlanePoint(0.0, 0.0), PlanePoint(100.0, 0.0)]
    model = gp_fit(points, np.array([1.0, 3.0]), RBFKernel(1.0, 50.0, 0.1))
    assert gp_predict(model, points).shape == (2,)


def test_duplicate_inputs_handled_by_jitter():
    X = np.zeros((4, 2))
    model = gp_fit(X, np.array([1.0, 1.0, 1.0, 1.0]), RBFKernel(1.0, 10.0, 0.0))
    assert model.noise_used > 0
    assert np.all(np.isfinite(gp_predict(model, X)))


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError, match="length mismatch"):
        gp_fit(np.zeros((3, 2)), np.zeros(2), RBFKernel(1.0, 1.0, 0.1))
    with pytest.raises(ValueError, match="dimension mismatch"):
        gp_fit(np.zeros((3, 3)), np.zeros(3), RBFKernel(1.0, 1.0, 0.1))
    with pytest.raises(ValueError):
        RBFKernel(variance=0.0, lengthscale=1.0, noise=0.1)


def test_median_pairwise_distance():
    X = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
    assert median_pairwise_distance(X) == pytest.approx(5.0)
    assert median_pairwise_distance(X[:1]) == 1.0


def test_selection_prefers_smooth_kernel_for_smooth_field(rng):
    X = rng.uniform(0, 5000, size=(120, 2))
    y = np.sin(X[:, 0] / 1500.0) + np.cos(X[:, 1] / 1500.0) + 0.05 * rng.normal(size=120)
    kernel, lml = select_gp_hyperparameters(X, y)
    assert np.isfinite(lml)
    assert kernel.noise / kernel.variance <= 0.1
    fit = gp_predict(gp_fit(X, y, kernel), X)
    assert np.corrcoef(fit, y)[0, 1] > 0.95

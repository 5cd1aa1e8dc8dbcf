import numpy as np
import pytest

from src.features.smote import (
    SmoteConfig,
    n_needed_for_ratio,
    nearest_minority_neighbors,
    smote_balance,
    smote_oversample,
)


def on_some_segment(row, X, neighbours, tol=1e-9):
    for i in range(len(X)):
        for j in neighbours[i]:
            d = X[j] - X[i]
            norm = float(d @ d)
            if norm == 0.0:
                if np.allclose(row, X[i], atol=tol):
                    return True
                continue
            u = float((row - X[i]) @ d) / norm
            if -tol <= u <= 1 + tol and np.allclose(row, X[i] + u * d, atol=tol):
                return True
    return False


def test_identical_minority_rows_give_copies():
    X = np.tile([1.0, 2.0, 3.0], (5, 1))
    synthetic = smote_oversample(X, SmoteConfig(k_neighbors=3), 20)
    assert synthetic.shape == (20, 3)
    assert np.all(synthetic == X[0])


def test_two_points_interpolate_between_them():
    X = np.array([[0.0, 0.0], [2.0, 4.0]])
    synthetic = smote_oversample(X, SmoteConfig(k_neighbors=5, seed=9), 200)
    u = synthetic[:, 0] / 2.0
    assert np.all((u >= 0) & (u <= 1))
    assert np.allclose(synthetic[:, 1], 2 * synthetic[:, 0])


def test_every_row_lies_on_a_neighbour_segment(rng):
    X = rng.normal(size=(30, 4))
    cfg = SmoteConfig(k_neighbors=5, seed=2)
    neighbours = nearest_minority_neighbors(X, 5)
    synthetic = smote_oversample(X, cfg, 50)
    assert all(on_some_segment(row, X, neighbours) for row in synthetic)


def test_per_feature_stays_in_bounding_box(rng):
    X = rng.uniform(size=(20, 3))
    synthetic = smote_oversample(X, SmoteConfig(per_feature=True, seed=1), 300)
    assert np.all(synthetic >= X.min(axis=0) - 1e-12)
    assert np.all(synthetic <= X.max(axis=0) + 1e-12)


def test_neighbours_exclude_self():
    X = np.array([[0.0], [1.0], [3.0], [10.0]])
    neighbours = nearest_minority_neighbors(X, 2)
    assert all(i not in neighbours[i] for i in range(4))
    assert neighbours[0].tolist() == [1, 2]


@pytest.mark.parametrize(
    "n_min, n_maj, ratio, expected",
    [(23, 77, 1.0, 54), (23, 77, 0.5, 16), (50, 50, 1.0, 0), (40, 50, 0.5, 0)],
)
def test_needed_rows(n_min, n_maj, ratio, expected):
    assert n_needed_for_ratio(n_min, n_maj, ratio) == expected


def test_balance_reaches_ratio(rng):
    X = rng.normal(size=(100, 3))
    y = np.r_[np.ones(23, dtype=int), np.zeros(77, dtype=int)]
    X_out, y_out = smote_balance(X, y, SmoteConfig(target_ratio=1.0))
    assert np.sum(y_out == 1) == np.sum(y_out == 0) == 77
    assert np.array_equal(X_out[:100], X)
    assert np.array_equal(y_out[:100], y)


def test_balance_is_seeded(rng):
    X = rng.normal(size=(60, 2))
    y = (np.arange(60) < 10).astype(int)
    a, _ = smote_balance(X, y, SmoteConfig(seed=5))
    b, _ = smote_balance(X, y, SmoteConfig(seed=5))
    c, _ = smote_balance(X, y, SmoteConfig(seed=6))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_balance_skips_single_class():
    X = np.zeros((4, 2))
    y = np.zeros(4, dtype=int)
    X_out, y_out = smote_balance(X, y, SmoteConfig())
    assert len(X_out) == 4 and len(y_out) == 4


def test_needs_two_minority_rows():
    with pytest.raises(ValueError, match="at least 2"):
        smote_oversample(np.zeros((1, 3)), SmoteConfig(), 5)

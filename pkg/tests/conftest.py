import numpy as np
import pytest

from gridband.dataset import DesignMatrix


def make_design(X, y, t0: int = 0) -> DesignMatrix:
    """Wrap arrays as a design matrix with hourly fake timestamps."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    names = tuple(f"x{i}" for i in range(X.shape[1]))
    times = (t0 + np.arange(X.shape[0], dtype=np.int64)) * 3600
    return DesignMatrix(rows=X, targets=y, feature_names=names, target_times=times)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def linear_data(rng):
    """Exactly linear target over a well-conditioned random design."""
    X = rng.normal(size=(80, 3))
    y = 2.0 + X @ np.array([3.0, -1.0, 0.5])
    return make_design(X, y)

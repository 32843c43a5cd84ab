import numpy as np
import pytest

from metricnorms import build_point_cloud, build_periodic_grid, ScalarField


@pytest.fixture
def two_point():
    """Two points at distance 0.5, unit weights, u = (0, 1)."""
    space = build_point_cloud(np.array([[0.0, 0.5], [0.5, 0.0]]),
                              np.array([1.0, 1.0]))
    field = ScalarField(space, np.array([0.0, 1.0]))
    return space, field


@pytest.fixture
def grid_1d_32():
    return build_periodic_grid(1, 32, 1.0)


@pytest.fixture
def grid_2d_8():
    return build_periodic_grid(2, 8, 1.0)


def random_point_cloud(rng, n, dim=2, weight_range=(0.5, 2.0)):
    while True:
        pts = rng.uniform(0.0, 1.0, size=(n, dim))
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        if n == 1 or np.min(d[~np.eye(n, dtype=bool)]) > 1e-3:
            break
    w = rng.uniform(*weight_range, size=n)
    return build_point_cloud(d, w)

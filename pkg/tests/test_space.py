import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metricnorms import (build_periodic_grid, build_point_cloud, scale_of_pair,
                         ball_average, estimate_doubling, ScalarField,
                         MetricValidationError)
from metricnorms.space import (scale_of_distance, ResourceError, space_to_dict,
                               space_from_dict)


class TestGrids:
    def test_1d_grid_basics(self):
        g = build_periodic_grid(1, 4, 1.0)
        assert g.n_points == 4
        assert np.allclose(g.measure, 0.25)
        assert math.isclose(g.diameter, 0.5)
        # torus wrap: points 0 and 3 are one spacing apart
        assert math.isclose(g.dist(0, 3), 0.25)

    def test_2d_grid_measure(self):
        g = build_periodic_grid(2, 8, 1.0)
        assert g.n_points == 64
        assert np.allclose(g.measure, 1.0 / 64)

    def test_budget(self):
        with pytest.raises(ResourceError):
            build_periodic_grid(3, 64, 1.0, point_budget=1000)

    def test_translation_invariant_metric(self):
        # exact equality of distances at equal index offsets (res not a power of 2)
        g = build_periodic_grid(1, 6, 1.0)
        assert g.dist(1, 0) == g.dist(0, 5) == g.dist(2, 1)

    def test_roundtrip_serialization(self):
        g = build_periodic_grid(2, 4, 2.0)
        g2 = space_from_dict(space_to_dict(g))
        assert g2.content_hash() == g.content_hash()


class TestPointClouds:
    def test_two_point_valid(self):
        sp = build_point_cloud(np.array([[0, 0.5], [0.5, 0]]), np.array([1.0, 1.0]))
        assert sp.n_points == 2

    def test_triangle_violation_names_triple(self):
        d = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]])
        with pytest.raises(MetricValidationError, match="triangle"):
            build_point_cloud(d, np.ones(3))

    def test_single_point_degenerate(self):
        sp = build_point_cloud(np.zeros((1, 1)), np.array([2.0]))
        assert sp.total_measure == 2.0

    def test_asymmetry_rejected(self):
        d = np.array([[0.0, 1.0], [1.1, 0.0]])
        with pytest.raises(MetricValidationError, match="asymmetric"):
            build_point_cloud(d, np.ones(2))

    def test_cloud_roundtrip(self):
        d = np.array([[0.0, 0.4], [0.4, 0.0]])
        sp = build_point_cloud(d, np.array([1.0, 2.0]))
        sp2 = space_from_dict(space_to_dict(sp))
        assert np.allclose(sp2.dist_matrix, d)


class TestScaleOfPair:
    def test_examples(self):
        assert scale_of_distance(0.5) == 0
        assert scale_of_distance(1.0) == -1
        assert scale_of_distance(0.3) == 1

    def test_same_point_rejected(self, two_point):
        space, _ = two_point
        with pytest.raises(ValueError):
            scale_of_pair(space, 0, 0)

    @given(st.floats(min_value=1e-6, max_value=1e6),
           st.floats(min_value=1e-6, max_value=1e6))
    def test_monotone(self, d1, d2):
        # smaller distances live at finer (larger) scales
        if d1 < d2:
            assert scale_of_distance(d1) >= scale_of_distance(d2)

    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_bracketing(self, d):
        k = scale_of_distance(d)
        assert 2.0 ** (-k - 1) <= d < 2.0 ** (-k)


class TestBallAverage:
    def test_constant(self, grid_1d_32):
        u = np.full(32, 3.7)
        assert math.isclose(ball_average(grid_1d_32, u, 5, 0.2), 3.7)

    def test_two_point(self, two_point):
        space, field = two_point
        assert ball_average(space, field.values, 0, 0.6) == 0.5
        assert ball_average(space, field.values, 0, 0.4) == 0.0

    def test_measure_rescaling_invariance(self, two_point):
        space, field = two_point
        scaled = build_point_cloud(space.dist_matrix, 7.0 * space.measure)
        a = ball_average(space, field.values, 0, 0.6)
        b = ball_average(scaled, field.values, 0, 0.6)
        assert math.isclose(a, b)


class TestDoubling:
    def test_1d_exponent(self):
        g = build_periodic_grid(1, 64, 1.0)
        rep = estimate_doubling(g, rng_seed=11)
        assert 0.8 <= rep.n_hat <= 1.2
        assert rep.kappa_hat <= rep.n_hat
        assert rep.C1_hat <= 1.0 <= rep.C2_hat

    def test_2d_exponent(self):
        g = build_periodic_grid(2, 32, 1.0)
        rep = estimate_doubling(g, rng_seed=11)
        assert 1.7 <= rep.n_hat <= 2.3

    def test_degenerate_tiny_balls(self, two_point):
        space, _ = two_point
        rep = estimate_doubling(space, lambda_grid=(1.5,), sample_count=20,
                                rng_seed=0, radius_range=(0.01, 0.02))
        assert rep.n_hat == 0.0 and rep.kappa_hat == 0.0

    def test_deterministic(self):
        g = build_periodic_grid(1, 32, 1.0)
        a = estimate_doubling(g, rng_seed=5)
        b = estimate_doubling(g, rng_seed=5)
        assert a.n_hat == b.n_hat and a.samples == b.samples

    def test_resolution_improves_fit(self):
        coarse = estimate_doubling(build_periodic_grid(1, 16, 1.0), rng_seed=3)
        fine = estimate_doubling(build_periodic_grid(1, 128, 1.0), rng_seed=3)
        assert abs(fine.n_hat - 1.0) <= abs(coarse.n_hat - 1.0) + 0.15

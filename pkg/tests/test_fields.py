import math

import numpy as np
import pytest

from metricnorms import (build_periodic_grid, build_point_cloud, ScalarField,
                         FunctionFamilySpec, generate_family,
                         lipschitz_constant, ConfigError)


def test_constant_family():
    g = build_periodic_grid(1, 8, 1.0)
    spec = FunctionFamilySpec(kind="constant", count=2, amplitude=(3.0, 3.0))
    fields = generate_family(g, spec)
    assert all(np.all(f.values == 3.0) for f in fields)


def test_trig_zero_mean():
    g = build_periodic_grid(1, 8, 1.0)
    spec = FunctionFamilySpec(kind="trig_polynomial", count=4, degree=1, rng_seed=2)
    for f in generate_family(g, spec):
        assert abs(np.mean(f.values)) < 1e-12


def test_determinism_bit_identical():
    g = build_periodic_grid(2, 8, 1.0)
    spec = FunctionFamilySpec(kind="bump_mixture", count=3, rng_seed=9)
    a = generate_family(g, spec)
    b = generate_family(g, spec)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.values, fb.values)


def test_trig_needs_grid():
    cloud = build_point_cloud(np.array([[0, 0.5], [0.5, 0]]), np.ones(2))
    with pytest.raises(ConfigError):
        generate_family(cloud, FunctionFamilySpec(kind="trig_polynomial"))


def test_unknown_kind():
    g = build_periodic_grid(1, 8, 1.0)
    with pytest.raises(ConfigError):
        generate_family(g, FunctionFamilySpec(kind="nope"))


class TestLipschitz:
    def test_constant_zero(self, grid_1d_32):
        f = ScalarField(grid_1d_32, np.ones(32))
        assert lipschitz_constant(grid_1d_32, f) == 0.0

    def test_two_point(self, two_point):
        space, field = two_point
        assert lipschitz_constant(space, field) == 2.0

    def test_sawtooth_wrap(self):
        # coordinate function on the torus: steepest pair is across the wrap
        n = 16
        g = build_periodic_grid(1, n, 1.0)
        f = ScalarField(g, g.coords[:, 0])
        # oracle: exhaustive pair scan, done independently here
        best = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                best = max(best, abs(f.values[i] - f.values[j]) / g.dist(i, j))
        assert math.isclose(best, n - 1.0)
        assert math.isclose(lipschitz_constant(g, f), best)

    def test_homogeneity_and_shift(self, two_point):
        space, field = two_point
        base = lipschitz_constant(space, field)
        assert math.isclose(lipschitz_constant(space, field.scaled(-3.5)),
                            3.5 * base)
        assert math.isclose(lipschitz_constant(space, field.shifted(4.2)), base)


def test_lipschitz_family_bound():
    g = build_periodic_grid(1, 16, 1.0)
    spec = FunctionFamilySpec(kind="lipschitz_random", count=4, degree=3,
                              amplitude=(0.5, 1.0), rng_seed=1)
    for f in generate_family(g, spec):
        # sums of distance cones: Lipschitz constant at most sum |a_i| <= 3
        assert lipschitz_constant(g, f) <= 3.0 + 1e-9

import math

import numpy as np
import pytest

from metricnorms import (build_periodic_grid, build_point_cloud, ScalarField,
                         GradientSequence, base_class, shifted_class,
                         lower_tail_class, upper_tail_class, check_membership,
                         transform_from_base, transform_to_base,
                         difference_gradient, grand_maximal_gradient,
                         default_dictionary)
from metricnorms.space import ScaleWindow
from metricnorms.gradients import (zero_gradient, constant_gradient,
                                   roundtrip_constant)

INF = float("inf")


def line_cloud():
    """Three collinear points spanning scales k = -2 .. 1."""
    pos = np.array([0.0, 0.3, 2.3])
    d = np.abs(pos[:, None] - pos[None, :])
    return build_point_cloud(d, np.ones(3))


class TestMembership:
    def test_constant_zero_gradient(self, grid_1d_32):
        u = ScalarField(grid_1d_32, np.full(32, 2.0))
        rep = check_membership(grid_1d_32, u, zero_gradient(grid_1d_32),
                               base_class(0.7))
        assert rep.rho_min == 0.0 and rep.is_member

    def test_tight_two_point(self, two_point):
        space, u = two_point
        rep = check_membership(space, u, constant_gradient(space, 1.0),
                               base_class(1.0))
        assert math.isclose(rep.rho_min, 1.0)

    def test_scaling(self, two_point):
        space, u = two_point
        rep = check_membership(space, u, constant_gradient(space, 0.25),
                               base_class(1.0))
        assert math.isclose(rep.rho_min, 4.0)
        assert rep.violated_count == 1
        assert rep.worst_pair == (0, 1, 0)

    def test_infeasible_zero_gradient(self, two_point):
        space, u = two_point
        rep = check_membership(space, u, zero_gradient(space), base_class(1.0))
        assert rep.rho_min == INF

    def test_rho_inverse_scaling(self, two_point):
        space, u = two_point
        g = constant_gradient(space, 0.8)
        r1 = check_membership(space, u, g, base_class(1.0)).rho_min
        r2 = check_membership(space, u, g.scaled(2.0), base_class(1.0)).rho_min
        assert math.isclose(r1, 2.0 * r2)


class TestTransforms:
    def test_to_base_lower_tail_delta(self):
        # g_j = [j == 0]: h_k = 2^((k+1)/2) for k <= 0, else 0
        sp = line_cloud()
        win = sp.scale_window()
        arr = np.zeros((len(win), 3))
        arr[0 - win.k_min] = 1.0
        g = GradientSequence(sp, win, arr)
        h = transform_to_base(g, lower_tail_class(1.0, 0.5, 0))
        for k in range(win.k_min, 1):
            assert np.allclose(h.value_at(k), 2.0 ** ((k + 1) / 2.0))
        assert np.allclose(h.value_at(1), 0.0)

    def test_to_base_upper_tail_delta(self):
        # g_j = [j == 0]: h_k = 2^(-k) for k >= 0, else 0
        sp = line_cloud()
        win = sp.scale_window()
        arr = np.zeros((len(win), 3))
        arr[0 - win.k_min] = 1.0
        g = GradientSequence(sp, win, arr)
        h = transform_to_base(g, upper_tail_class(1.0, 1.0, 0))
        assert np.allclose(h.value_at(0), 1.0)
        assert np.allclose(h.value_at(1), 0.5)
        assert np.allclose(h.value_at(-1), 0.0)

    def test_from_base_shifted_stencil(self):
        sp = line_cloud()
        win = sp.scale_window()
        rng = np.random.default_rng(0)
        g = GradientSequence(sp, win, rng.uniform(0, 1, size=(len(win), 3)))
        h = transform_from_base(g, shifted_class(1.0, 1, 0))
        for k in range(win.k_min - 1, win.k_max + 1):
            assert np.allclose(h.value_at(k), g.value_at(k) + g.value_at(k + 1))

    def test_from_base_shifted_identity(self):
        sp = line_cloud()
        g = constant_gradient(sp, 1.5)
        h = transform_from_base(g, shifted_class(1.0, 0, 0))
        for k in g.window:
            assert np.allclose(h.value_at(k), g.value_at(k))

    def test_from_base_lower_tail_shift(self):
        sp = line_cloud()
        win = sp.scale_window()
        rng = np.random.default_rng(1)
        g = GradientSequence(sp, win, rng.uniform(0, 1, size=(len(win), 3)))
        h = transform_from_base(g, lower_tail_class(1.0, 0.5, 2))
        for k in range(win.k_min, win.k_max + 3):
            assert np.allclose(h.value_at(k), 2.0 * g.value_at(k - 2))

    def test_membership_preserved_all_classes(self, two_point):
        space, u = two_point
        g = constant_gradient(space, 1.0)  # tight base member
        specs = [shifted_class(1.0, 2, 1), lower_tail_class(1.0, 0.5, 1),
                 lower_tail_class(1.0, 1.0, -2), upper_tail_class(1.0, 1.0, 1),
                 upper_tail_class(1.0, 0.3, -1)]
        for spec in specs:
            h = transform_from_base(g, spec)
            assert check_membership(space, u, h, spec).rho_min <= 1.0 + 1e-9
            back = transform_to_base(h, spec)
            rep = check_membership(space, u, back, base_class(1.0))
            assert rep.rho_min <= 1.0 + 1e-9

    def test_roundtrip_inflation_bound(self):
        sp = line_cloud()
        win = sp.scale_window()
        rng = np.random.default_rng(4)
        g = GradientSequence(sp, win, rng.uniform(0.1, 1, size=(len(win), 3)))
        for spec in [shifted_class(1.0, 1, 1), lower_tail_class(1.0, 0.4, 1),
                     upper_tail_class(1.0, 0.8, 2)]:
            h = transform_to_base(transform_from_base(g, spec), spec)
            bound = roundtrip_constant(spec)
            for k in win:
                assert np.all(h.value_at(k) <= bound * np.max(g.g) + 1e-12)


class TestDifferenceGradient:
    def test_constant_field(self, grid_1d_32):
        u = ScalarField(grid_1d_32, np.full(32, 5.0))
        g = difference_gradient(grid_1d_32, u, 0.5, 2.0)
        assert np.all(g.g == 0.0)

    def test_two_point_hand_value(self, two_point):
        # annulus [2^(-j+1), 2^(-j+K0+1)) holds the partner only for j in {2, 3};
        # there h_j = |du| / (d^s V) = 1 / (0.5 * 1) = 2
        space, u = two_point
        g = difference_gradient(space, u, 1.0, 1.0, K0=2)
        assert np.allclose(g.value_at(2), 2.0)
        assert np.allclose(g.value_at(3), 2.0)
        assert np.allclose(g.value_at(0), 0.0)
        assert np.allclose(g.value_at(1), 0.0)

    def test_against_triple_loop_oracle(self):
        # independent brute-force evaluation of the double average
        g = build_periodic_grid(1, 12, 1.0)
        rng = np.random.default_rng(8)
        u = ScalarField(g, rng.normal(size=12))
        s, p, K0 = 0.6, 2.0, 2
        got = difference_gradient(g, u, s, p, K0=K0)
        D = g.dist_matrix
        mu = g.measure
        V = np.array([[mu[D[y] < D[y, z]].sum() for z in range(12)]
                      for y in range(12)])
        for j in got.window:
            expected = np.zeros(12)
            for x in range(12):
                num = den = 0.0
                for y in range(12):
                    if not D[x, y] < 2.0 ** (-j - 1):
                        continue
                    den += mu[y]
                    acc = 0.0
                    for z in range(12):
                        if 2.0 ** (-j + 1) <= D[x, z] < 2.0 ** (-j + K0 + 1):
                            acc += (abs(u.values[y] - u.values[z]) ** p /
                                    (D[y, z] ** (s * p) * V[y, z])) * mu[z]
                    num += mu[y] * acc
                expected[x] = (num / den) ** (1.0 / p) if den > 0 else 0.0
            assert np.allclose(got.value_at(j), expected, atol=1e-12)

    def test_membership_after_scaling(self, two_point):
        space, u = two_point
        g = difference_gradient(space, u, 1.0, 1.0, K0=2)
        spec = lower_tail_class(1.0, 1.0, 1)
        rep = check_membership(space, u, g, spec)
        assert math.isfinite(rep.rho_min)
        scaled = g.scaled(rep.rho_min)
        assert check_membership(space, u, scaled, spec).rho_min <= 1.0 + 1e-9

    def test_homogeneity_and_shift(self):
        g = build_periodic_grid(1, 16, 1.0)
        rng = np.random.default_rng(2)
        u = ScalarField(g, rng.normal(size=16))
        base = difference_gradient(g, u, 0.5, 1.5)
        scaled = difference_gradient(g, u.scaled(-2.0), 0.5, 1.5)
        shifted = difference_gradient(g, u.shifted(10.0), 0.5, 1.5)
        assert np.allclose(scaled.g, 2.0 * base.g)
        assert np.allclose(shifted.g, base.g)


class TestGrandMaximalGradient:
    def test_constant_killed(self):
        g = build_periodic_grid(1, 32, 1.0)
        u = ScalarField(g, np.full(32, 3.0))
        grad = grand_maximal_gradient(g, u, 0.5, default_dictionary(1))
        assert np.max(grad.g) < 1e-12

    def test_homogeneity_and_shift(self):
        g = build_periodic_grid(1, 32, 1.0)
        rng = np.random.default_rng(3)
        u = ScalarField(g, rng.normal(size=32))
        dictionary = default_dictionary(1)
        base = grand_maximal_gradient(g, u, 0.5, dictionary)
        scaled = grand_maximal_gradient(g, u.scaled(3.0), 0.5, dictionary)
        shifted = grand_maximal_gradient(g, u.shifted(-7.0), 0.5, dictionary)
        assert np.allclose(scaled.g, 3.0 * base.g)
        assert np.allclose(shifted.g, base.g, atol=1e-12)

    def test_single_frequency_concentration(self):
        n = 256
        g = build_periodic_grid(1, n, 1.0)
        x = g.coords[:, 0]
        u = ScalarField(g, np.cos(2.0 * np.pi * 8.0 * x))
        grad = grand_maximal_gradient(g, u, 0.5, default_dictionary(1))
        win = grad.window
        responses = [np.max(grad.value_at(k)) / 2.0 ** (k * 0.5) for k in win]
        k_star = win.k_min + int(np.argmax(responses))
        assert abs(k_star - math.log2(8.0)) <= 1.0

    def test_needs_grid(self, two_point):
        space, u = two_point
        with pytest.raises(ValueError):
            grand_maximal_gradient(space, u, 0.5, default_dictionary(1))


def test_gradient_serialization_roundtrip(two_point):
    from metricnorms.gradients import gradient_to_dict, gradient_from_dict
    space, _ = two_point
    g = constant_gradient(space, 1.25, ScaleWindow(-1, 2))
    g2 = gradient_from_dict(space, gradient_to_dict(g))
    assert g2.window == g.window
    assert np.allclose(g2.g, g.g)

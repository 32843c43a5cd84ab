import math

import numpy as np
import pytest

from metricnorms import (build_periodic_grid, build_point_cloud, ScalarField,
                         build_program, build_sobolev_program, solve,
                         brute_force_norm, feasibility_repair, SolveConfig,
                         aggregate, check_membership, base_class,
                         difference_gradient)
from metricnorms.gradients import zero_gradient, constant_gradient
from metricnorms.optimize import ResourceError

INF = float("inf")
TIGHT = SolveConfig(max_iters=30000, tol=1e-9)


class TestBuildProgram:
    def test_constant_field(self, grid_1d_32):
        u = ScalarField(grid_1d_32, np.full(32, 1.0))
        prog = build_program(grid_1d_32, u, 0.5, 2, 2)
        assert prog.n_constraints == 0
        assert solve(prog).upper_bound == 0.0

    def test_two_point_single_constraint(self, two_point):
        space, u = two_point
        prog = build_program(space, u, 1.0, 2, 2)
        assert prog.n_constraints == 1
        assert prog.scales == (0,)
        assert math.isclose(prog.c[0], 2.0)

    def test_grid_constraint_count(self):
        g = build_periodic_grid(1, 8, 1.0)
        rng = np.random.default_rng(0)
        u = ScalarField(g, rng.normal(size=8))
        prog = build_program(g, u, 0.5, 2, 2)
        assert prog.n_constraints <= 8 * 7 // 2
        # every pair sits at exactly one scale: constraints partition pairs
        assert len(prog.con_row) == prog.n_constraints


class TestSolveHandValues:
    def test_two_point_p2q2(self, two_point):
        space, u = two_point
        res = solve(build_program(space, u, 1.0, 2, 2), TIGHT)
        assert abs(res.upper_bound - math.sqrt(2.0)) < 1e-4

    def test_two_point_p1q1(self, two_point):
        space, u = two_point
        res = solve(build_program(space, u, 1.0, 1, 1), TIGHT)
        assert abs(res.upper_bound - 2.0) < 1e-4

    def test_two_point_sup(self, two_point):
        space, u = two_point
        res = solve(build_program(space, u, 1.0, INF, INF), TIGHT)
        assert math.isclose(res.upper_bound, 1.0)
        assert res.converged

    def test_upper_bound_matches_iterate(self, two_point):
        space, u = two_point
        res = solve(build_program(space, u, 1.0, 2, 2), TIGHT)
        val = aggregate(space, res.iterate_gradient, 2, 2, "Lp_lq")
        assert math.isclose(val, res.upper_bound, rel_tol=1e-12)
        rep = check_membership(space, u, res.iterate_gradient, base_class(1.0))
        assert rep.rho_min <= 1.0 + 1e-9

    def test_scaling_homogeneity(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, size=(5, 2))
        d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
        sp = build_point_cloud(d, rng.uniform(0.5, 2, size=5))
        u = ScalarField(sp, rng.normal(size=5))
        a = solve(build_program(sp, u, 0.5, 2, 2), TIGHT).upper_bound
        b = solve(build_program(sp, u.scaled(3.0), 0.5, 2, 2), TIGHT).upper_bound
        assert abs(b - 3.0 * a) <= 1e-6 * max(1.0, b)

    def test_heuristic_flag_quasinorm(self, two_point):
        space, u = two_point
        res = solve(build_program(space, u, 1.0, 0.5, 0.5),
                    SolveConfig(max_iters=2000))
        assert res.heuristic
        # still a valid certified upper bound
        rep = check_membership(space, u, res.iterate_gradient, base_class(1.0))
        assert rep.rho_min <= 1.0 + 1e-9


class TestBruteForce:
    def test_constant(self, grid_1d_32):
        u = ScalarField(grid_1d_32, np.full(32, 2.0))
        assert brute_force_norm(grid_1d_32, u, 0.5, 2, 2) == 0.0

    def test_two_point_analytic(self, two_point):
        space, u = two_point
        val = brute_force_norm(space, u, 1.0, 2, 2, value_grid=1e-3)
        assert abs(val - math.sqrt(2.0)) <= 2e-3

    def test_equilateral(self):
        d = 0.5 * (np.ones((3, 3)) - np.eye(3))
        sp = build_point_cloud(d, np.ones(3))
        u = ScalarField(sp, np.array([0.0, 0.0, 1.0]))
        val = brute_force_norm(sp, u, 1.0, 1, 1, value_grid=1e-3)
        assert abs(val - 2.0) <= 4e-3

    def test_too_large_rejected(self):
        g = build_periodic_grid(1, 16, 1.0)
        u = ScalarField(g, np.arange(16.0))
        with pytest.raises(ResourceError):
            brute_force_norm(g, u, 0.5, 2, 2)


class TestRepair:
    def test_member_unchanged(self, two_point):
        space, u = two_point
        g = constant_gradient(space, 2.0)
        out = feasibility_repair(space, u, 1.0, g)
        assert out is g

    def test_scaling(self, two_point):
        space, u = two_point
        g = constant_gradient(space, 0.5)
        out = feasibility_repair(space, u, 1.0, g)
        assert np.allclose(out.value_at(0), 1.0)

    def test_zero_gradient_fallback(self, two_point):
        space, u = two_point
        g = zero_gradient(space)
        out, info = feasibility_repair(space, u, 1.0, g, return_info=True)
        assert info["fallback"]
        assert np.allclose(out.value_at(0), 1.0)  # c_max / 2 = 2 / 2
        rep = check_membership(space, u, out, base_class(1.0))
        assert rep.rho_min <= 1.0 + 1e-12


class TestAgainstOracleAndConstructions:
    def test_solver_beats_constructions(self):
        g = build_periodic_grid(1, 16, 1.0)
        rng = np.random.default_rng(1)
        u = ScalarField(g, rng.normal(size=16))
        s, p, q = 0.5, 2.0, 2.0
        res = solve(build_program(g, u, s, p, q), SolveConfig(max_iters=8000,
                                                              tol=1e-8))
        diff = difference_gradient(g, u, s, max(p, 1.0))
        repaired = feasibility_repair(g, u, s, diff)
        assert res.upper_bound <= aggregate(g, repaired, p, q, "Lp_lq") + 1e-9

    def test_sobolev_identity_small(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(0, 1, size=(6, 2))
        d = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
        sp = build_point_cloud(d, rng.uniform(0.5, 2, size=6))
        u = ScalarField(sp, rng.normal(size=6))
        multi = solve(build_program(sp, u, 0.6, 2.0, INF), TIGHT)
        single = solve(build_sobolev_program(sp, u, 0.6, 2.0), TIGHT)
        rel = abs(multi.upper_bound - single.upper_bound) / single.upper_bound
        assert rel < 1e-6

"""Tests for the augmented-Lagrangian solver on analytic toy problems and a
small collocation instance."""

import math

import numpy as np
import pytest

from sdestim.model import make_duffing_model
from sdestim.solve import (
    STATUS_CONVERGED,
    STATUS_LINE_SEARCH,
    NlpSolution,
    SolveOptions,
    check_kkt,
    solve,
)
from sdestim.transcribe import KIND_JME, CollocationGrid, build_problem


class Unconstrained:
    """maximize merit(v) with no constraints."""

    def __init__(self, merit, gradient):
        self._m = merit
        self._g = gradient

    def merit(self, v):
        return float(self._m(np.asarray(v, dtype=float)))

    def merit_gradient(self, v):
        return np.asarray(self._g(np.asarray(v, dtype=float)), dtype=float)


class Constrained(Unconstrained):
    """maximize merit(v) subject to defects(v) = 0 (dense Jacobian)."""

    def __init__(self, merit, gradient, defects, jacobian):
        super().__init__(merit, gradient)
        self._c = defects
        self._j = jacobian

    def defects(self, v):
        return np.atleast_1d(np.asarray(self._c(np.asarray(v, dtype=float)), dtype=float))

    def defect_jacobian(self, v):
        return np.atleast_2d(np.asarray(self._j(np.asarray(v, dtype=float)), dtype=float))


def parabola_1d():
    return Unconstrained(
        lambda v: -((v[0] - 1.0) ** 2),
        lambda v: np.array([-2.0 * (v[0] - 1.0)]),
    )


def sum_to_one():
    # maximize -(v1^2 + v2^2) s.t. v1 + v2 = 1; optimum (0.5, 0.5)
    return Constrained(
        lambda v: -float(v @ v),
        lambda v: -2.0 * v,
        lambda v: np.array([v[0] + v[1] - 1.0]),
        lambda v: np.array([[1.0, 1.0]]),
    )


def circle_target():
    # maximize -((v1-2)^2 + v2^2) s.t. v1^2 + v2^2 = 1; optimum (1, 0)
    return Constrained(
        lambda v: -((v[0] - 2.0) ** 2 + v[1] ** 2),
        lambda v: np.array([-2.0 * (v[0] - 2.0), -2.0 * v[1]]),
        lambda v: np.array([v[0] ** 2 + v[1] ** 2 - 1.0]),
        lambda v: np.array([[2.0 * v[0], 2.0 * v[1]]]),
    )


def rosenbrock():
    def g(v):
        return np.array(
            [
                2.0 * (1.0 - v[0]) + 400.0 * v[0] * (v[1] - v[0] ** 2),
                -200.0 * (v[1] - v[0] ** 2),
            ]
        )

    return Unconstrained(
        lambda v: -((1.0 - v[0]) ** 2 + 100.0 * (v[1] - v[0] ** 2) ** 2),
        g,
    )


class TestUnconstrained:
    def test_parabola_from_zero(self):
        sol = solve(parabola_1d(), np.zeros(1))
        assert sol.status == STATUS_CONVERGED
        assert sol.v_opt[0] == pytest.approx(1.0, abs=1e-8)
        assert sol.merit_value == pytest.approx(0.0, abs=1e-12)
        assert sol.constraint_violation == 0.0

    def test_rosenbrock_valley(self):
        sol = solve(rosenbrock(), np.array([-1.2, 1.0]))
        assert sol.status == STATUS_CONVERGED
        assert np.max(np.abs(sol.v_opt - 1.0)) <= 1e-6

    def test_initial_point_must_be_finite(self):
        bad = Unconstrained(lambda v: np.nan, lambda v: np.zeros(1))
        with pytest.raises(ValueError, match="finite"):
            solve(bad, np.zeros(1))


class TestConstrained:
    def test_sum_to_one_projection(self):
        sol = solve(sum_to_one(), np.array([3.0, -1.0]))
        assert sol.status == STATUS_CONVERGED
        assert np.max(np.abs(sol.v_opt - 0.5)) <= 1e-6
        assert sol.constraint_violation <= 1e-8
        # stationarity: grad merit = (-1,-1), J = [1,1] -> multiplier 1
        assert sol.multipliers[0] == pytest.approx(1.0, abs=1e-5)

    def test_circle_target(self):
        sol = solve(circle_target(), np.array([0.5, 0.5]))
        assert sol.status == STATUS_CONVERGED
        assert sol.v_opt[0] == pytest.approx(1.0, abs=1e-6)
        assert sol.v_opt[1] == pytest.approx(0.0, abs=1e-6)
        assert sol.multipliers[0] == pytest.approx(-1.0, abs=1e-5)

    def test_penalty_monotone_and_violation_decreasing(self):
        sol = solve(circle_target(), np.array([0.5, 0.5]))
        rhos = [h["rho"] for h in sol.history]
        assert all(b >= a for a, b in zip(rhos, rhos[1:]))
        bumps = [i for i in range(1, len(rhos)) if rhos[i] > rhos[i - 1]]
        if bumps:
            feas = [h["feasibility"] for h in sol.history[bumps[0]:]]
            assert all(b <= a * (1.0 + 1e-9) for a, b in zip(feas, feas[1:]))

    def test_scale_robustness(self):
        base = sum_to_one()
        scaled = Constrained(
            lambda v: 1e3 * base._m(v),
            lambda v: 1e3 * np.asarray(base._g(v)),
            base._c,
            base._j,
        )
        sol_a = solve(base, np.array([3.0, -1.0]))
        sol_b = solve(scaled, np.array([3.0, -1.0]))
        assert sol_b.status == STATUS_CONVERGED
        assert np.max(np.abs(sol_a.v_opt - sol_b.v_opt)) <= 1e-6

    def test_determinism(self):
        a = solve(circle_target(), np.array([0.5, 0.5]))
        b = solve(circle_target(), np.array([0.5, 0.5]))
        assert np.array_equal(a.v_opt, b.v_opt)
        assert [h["merit"] for h in a.history] == [h["merit"] for h in b.history]
        assert a.iterations.n_eval == b.iterations.n_eval

    def test_multiplier_warm_start_size_checked(self):
        with pytest.raises(ValueError, match="multiplier"):
            solve(
                sum_to_one(),
                np.zeros(2),
                SolveOptions(multipliers=np.zeros(3)),
            )


class TestStatusPaths:
    def test_line_search_failure_reported(self):
        class Cliff:
            def merit(self, v):
                return 0.0 if abs(v[0]) < 1e-12 else -np.inf

            def merit_gradient(self, v):
                return np.ones(1)

        sol = solve(Cliff(), np.zeros(1))
        assert sol.status == STATUS_LINE_SEARCH
        assert isinstance(sol, NlpSolution)

    def test_max_iter_reported(self):
        opts = SolveOptions(max_outer=1, max_inner=2)
        sol = solve(rosenbrock(), np.array([-1.2, 1.0]), opts)
        assert sol.status == "max-iter"


class TestKkt:
    def test_pass_at_converged_point(self):
        problem = circle_target()
        sol = solve(problem, np.array([0.5, 0.5]))
        report = check_kkt(problem, sol.v_opt, sol.multipliers)
        assert report.passed

    def test_fail_far_from_optimum(self):
        problem = circle_target()
        report = check_kkt(problem, np.array([3.0, 4.0]), np.zeros(1))
        assert not report.passed
        assert report.stationarity_norm > 0
        assert report.feasibility_norm > 0

    def test_stationarity_matches_directional_derivatives(self):
        # Lagrangian L(v) = merit + lam' c; its directional derivative along
        # random u must equal stationarity . u
        problem = circle_target()
        rng = np.random.default_rng(23)
        v = rng.standard_normal(2)
        lam = rng.standard_normal(1)
        report = check_kkt(problem, v, lam)

        def lagrangian(w):
            return problem.merit(w) + float(lam @ problem.defects(w))

        eps = 1e-6
        for _ in range(5):
            u = rng.standard_normal(2)
            u /= np.linalg.norm(u)
            fd = (lagrangian(v + eps * u) - lagrangian(v - eps * u)) / (2 * eps)
            assert fd == pytest.approx(float(report.stationarity @ u), abs=1e-6)


class TestTrace:
    def test_csv_trace_written(self, tmp_path):
        path = tmp_path / "trace.csv"
        solve(sum_to_one(), np.array([3.0, -1.0]), SolveOptions(trace=path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iter,merit,feasibility,grad_norm,step"
        assert len(lines) >= 2
        first = lines[1].split(",")
        assert int(first[0]) == 0
        float(first[1]), float(first[2]), float(first[3]), float(first[4])


class TestCollocationIntegration:
    def test_small_duffing_problem_converges(self):
        model = make_duffing_model("gaussian")
        grid = CollocationGrid(2.0, 0.25, 0.5)
        rng = np.random.default_rng(2)
        y = np.sin(0.5 * np.arange(grid.n_meas)) + 0.05 * rng.standard_normal(
            grid.n_meas
        )
        problem = build_problem(model, grid, y, KIND_JME)
        dv = problem.unpack(np.zeros(problem.n_dec))
        dv.ze = np.sin(grid.times)[:, None]
        dv.zm = np.sin(grid.mids)[:, None]
        dv.xe = np.cos(grid.times)[:, None]
        dv.xm = np.cos(grid.mids)[:, None]
        dv.theta = np.array([1.0, -1.0, 0.2, math.log(0.2)])

        # collocation merits need a penalty on the scale of the energy
        # metric; the library default of 10 suits generic problems
        sol = solve(problem, dv, SolveOptions(rho_init=1e4))
        assert sol.status == STATUS_CONVERGED
        assert sol.constraint_violation <= 1e-8
        report = check_kkt(problem, sol.v_opt, sol.multipliers)
        assert report.passed
        # solution vector comes back in structured form
        assert hasattr(sol.v_opt, "pack")
        traj = problem.trajectory(sol.v_opt)
        assert np.all(np.isfinite(traj.theta))

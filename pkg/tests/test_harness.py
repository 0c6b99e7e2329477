"""Tests for the Monte Carlo harness: config, guess, scoring, aggregation."""

import csv
import io
import json

import numpy as np
import pytest
from scipy.linalg import cholesky_banded

from sdestim.harness import (
    ExperimentConfig,
    _band_inverse_band,
    initial_guess,
    ise,
    run_monte_carlo,
    run_single,
    simulate_run,
    summarize,
)
from sdestim.model import make_duffing_model
from sdestim.simulate import config_digest, simulate_order15
from sdestim.transcribe import CollocationGrid, Trajectory, build_problem

NOMINAL = np.array([1.0, -1.0, 0.2, 0.1])


@pytest.fixture(scope="module")
def small_config():
    return ExperimentConfig(t_final=10.0, n_runs=2, seed=11)


@pytest.fixture(scope="module")
def mc_output(small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("mc")
    records, summary = run_monte_carlo(small_config, out)
    return records, summary, out


class TestExperimentConfig:
    def test_desk_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.kind == "gaussian"
        assert cfg.t_final == 50.0
        assert cfg.n_runs == 20
        assert cfg.estimators == ("jme", "mee", "pem")
        assert (cfg.a, cfg.b, cfg.d, cfg.gamma) == (1.0, -1.0, 0.2, 0.3)
        assert (cfg.sigma_d, cfg.sigma_y, cfg.sigma_init) == (0.1, 0.1, 0.4)
        assert (cfg.sigma_theta, cfg.gamma_shape, cfg.gamma_scale) == (10.0, 1.1, 10.0)
        assert (cfg.p_outlier, cfg.sigma_outlier, cfg.sigma_regular) == (0.25, 1.0, 0.2)
        assert (cfg.t_s, cfg.dt, cfg.h_c) == (0.1, 0.005, 0.05)

    def test_paper_scale(self):
        g = ExperimentConfig.paper_scale("gaussian")
        o = ExperimentConfig.paper_scale("outlier")
        assert (g.n_runs, g.t_final) == (100, 200.0)
        assert (o.n_runs, o.t_final) == (100, 100.0)
        assert o.kind == "outlier"

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError, match="kind"):
            ExperimentConfig(kind="robust")

    def test_rejects_misaligned_grids(self):
        with pytest.raises(ValueError, match="multiple"):
            ExperimentConfig(t_s=0.07)
        with pytest.raises(ValueError, match="multiple"):
            ExperimentConfig(t_final=50.05)
        with pytest.raises(ValueError, match="multiple"):
            ExperimentConfig(dt=0.03)

    def test_rejects_zero_runs(self):
        with pytest.raises(ValueError, match="n_runs"):
            ExperimentConfig(n_runs=0)

    def test_rejects_unknown_estimator(self):
        with pytest.raises(ValueError, match="estimators"):
            ExperimentConfig(estimators=("jme", "ekf"))

    def test_normalizes_estimators(self):
        cfg = ExperimentConfig(estimators=["PEM", "jme", "JME"])
        assert cfg.estimators == ("jme", "pem")

    def test_rejects_unknown_solver_option(self):
        with pytest.raises(ValueError, match="solver"):
            ExperimentConfig(solver={"rho": 1.0})

    def test_solver_defaults_and_override(self):
        assert ExperimentConfig().solve_options().rho_init == 1e4
        cfg = ExperimentConfig(solver={"rho_init": 50.0, "max_outer": 7})
        opts = cfg.solve_options()
        assert opts.rho_init == 50.0 and opts.max_outer == 7

    def test_dict_round_trip(self):
        cfg = ExperimentConfig(kind="outlier", t_final=20.0, solver={"tol_c": 1e-6})
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.as_dict())))
        assert again == cfg

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config"):
            ExperimentConfig.from_dict({"t_end": 10.0})

    def test_rejects_bad_mixture(self):
        with pytest.raises(ValueError, match="p_outlier"):
            ExperimentConfig(p_outlier=1.5)


class TestBandInverse:
    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(3)
        p, bw = 30, 3
        mat = np.zeros((p, p))
        for d in range(bw + 1):
            v = rng.standard_normal(p - d)
            mat += np.diag(v, -d)
            if d:
                mat += np.diag(v, d)
        mat += np.eye(p) * (np.abs(mat).sum(axis=1).max() + 1.0)
        ab = np.zeros((bw + 1, p))
        for d in range(bw + 1):
            ab[d, : p - d] = np.diag(mat, -d)
        band = _band_inverse_band(cholesky_banded(ab, lower=True))
        dense = np.linalg.inv(mat)
        for d in range(bw + 1):
            assert np.abs(band[d, : p - d] - np.diag(dense, -d)).max() < 1e-12


class TestInitialGuess:
    def test_sine_rate_recovery(self):
        # noise-free z = sin t: the rate guess must track cos t on the
        # interior 90% of the window
        grid = CollocationGrid(20.0, 0.05, 0.1)
        y = np.sin(grid.times[grid.meas_nodes])
        dv = initial_guess(y, 0.1, grid)
        interior = (grid.times >= 1.0) & (grid.times <= 19.0)
        err = np.abs(dv.xe[:, 0] - np.cos(grid.times))
        assert err[interior].max() <= 0.02

    def test_deterministic_oscillator_parameters(self):
        model = make_duffing_model("gaussian", sigma_d=0.0)
        path = simulate_order15(
            model,
            np.array([0.5]),
            np.array([0.3]),
            NOMINAL,
            0.005,
            50.0,
            rng=np.random.default_rng(0),
        )
        grid = CollocationGrid(50.0, 0.05, 0.1)
        dv = initial_guess(path.z[::20, 0], 0.1, grid)
        assert np.abs(dv.theta[:3] - NOMINAL[:3]).max() <= 0.1
        # noise-free data: the residual scale guess collapses
        assert np.exp(dv.theta[3]) < 1e-3

    def test_noise_scale_concentration(self):
        grid = CollocationGrid(1000.0, 0.05, 0.1)
        t = grid.times[grid.meas_nodes]
        noise = 0.1 * np.random.default_rng(123).standard_normal(t.size)
        dv = initial_guess(np.sin(0.05 * t) + noise, 0.1, grid)
        assert abs(np.exp(dv.theta[3]) - 0.1) <= 0.005

    def test_rank_deficient_warns_and_zeroes(self):
        grid = CollocationGrid(5.0, 0.05, 0.1)
        with pytest.warns(UserWarning, match="rank-deficient"):
            dv = initial_guess(np.zeros(grid.n_meas), 0.1, grid)
        assert np.array_equal(dv.theta[:3], np.zeros(3))

    def test_input_validation(self):
        grid = CollocationGrid(5.0, 0.05, 0.1)
        with pytest.raises(ValueError, match="at least 10"):
            initial_guess(np.zeros(9), 0.1, CollocationGrid(0.8, 0.05, 0.1))
        with pytest.raises(ValueError, match="expects"):
            initial_guess(np.zeros(grid.n_meas - 1), 0.1, grid)
        with pytest.raises(ValueError, match="t_s"):
            initial_guess(np.zeros(grid.n_meas), 0.2, grid)
        bad = np.zeros(grid.n_meas)
        bad[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            initial_guess(bad, 0.1, grid)


def _sim(t_final, seed=5):
    cfg = ExperimentConfig()
    model = cfg.make_model("gaussian")
    return simulate_order15(
        model,
        np.array([0.2]),
        np.array([-0.1]),
        NOMINAL,
        0.005,
        t_final,
        rng=np.random.default_rng(seed),
    )


class TestIse:
    def test_exact_estimate_scores_zero(self):
        path = _sim(20.0)
        est = Trajectory(times=path.times.copy(), x=path.x.copy(), z=path.z.copy(), theta=NOMINAL)
        assert ise(path, est) == 0.0

    def test_constant_offset_integrates_exactly(self):
        path = _sim(200.0)
        est = Trajectory(
            times=path.times.copy(),
            x=path.x.copy(),
            z=path.z.copy() + 0.1,
            theta=NOMINAL,
        )
        assert abs(ise(path, est) - 2.0) <= 1e-9

    def test_matches_finer_quadrature(self):
        # a piecewise-linear estimate evaluated through its own interpolant
        # must integrate consistently on a 10x finer grid
        from scipy.interpolate import interp1d

        path = _sim(50.0, seed=6)
        grid = CollocationGrid(50.0, 0.05, 0.1)
        xe = np.cos(0.3 * grid.times)[:, None]
        ze = np.sin(0.3 * grid.times)[:, None]
        est = Trajectory(
            times=grid.times,
            x=xe,
            z=ze,
            theta=NOMINAL,
            x_mid=0.5 * (xe[:-1] + xe[1:]),
            z_mid=0.5 * (ze[:-1] + ze[1:]),
        )
        coarse = ise(path, est)
        fine = np.linspace(0.0, 50.0, (path.times.size - 1) * 10 + 1)
        tx = interp1d(path.times, path.x[:, 0], kind="cubic")(fine)
        tz = interp1d(path.times, path.z[:, 0], kind="cubic")(fine)
        xq, zq = est.at(fine)
        oracle = np.trapezoid((tx - xq[:, 0]) ** 2 + (tz - zq[:, 0]) ** 2, fine)
        assert abs(coarse - oracle) <= 1e-3 * oracle

    def test_window_mismatch_raises(self):
        path = _sim(20.0)
        grid = CollocationGrid(10.0, 0.05, 0.1)
        est = Trajectory(
            times=grid.times,
            x=np.zeros((grid.times.size, 1)),
            z=np.zeros((grid.times.size, 1)),
            theta=NOMINAL,
        )
        with pytest.raises(ValueError, match="window"):
            ise(path, est)


class TestRunSingle:
    def test_all_estimators_complete(self, mc_output):
        records, _, _ = mc_output
        for rec in records:
            assert set(rec.results) == {"jme", "mee", "pem"}
            for res in rec.results.values():
                assert res.ok, res.status
                assert res.theta is not None and res.theta.shape == (4,)
                assert res.theta[3] > 0.0  # natural units
                assert res.ise is not None and res.ise >= 0.0

    def test_repeat_is_byte_identical(self, small_config, mc_output):
        records, _, _ = mc_output
        again = run_single(small_config, 0)
        assert again.canonical() == records[0].canonical()

    def test_estimator_subset_reproduces_results(self, small_config, mc_output):
        records, _, _ = mc_output
        sub = ExperimentConfig(t_final=10.0, n_runs=2, seed=11, estimators=("mee",))
        rec = run_single(sub, 0)
        assert set(rec.results) == {"mee"}
        assert rec.results["mee"].as_dict(include_timing=False) == records[0].results[
            "mee"
        ].as_dict(include_timing=False)

    def test_empty_estimator_set(self):
        cfg = ExperimentConfig(t_final=10.0, n_runs=1, seed=11, estimators=())
        rec = run_single(cfg, 0)
        assert rec.results == {} and rec.run == 0

    def test_merit_not_below_initial_guess(self, small_config, mc_output):
        records, _, _ = mc_output
        _, y = simulate_run(small_config, 0)
        grid = small_config.grid()
        guess = initial_guess(y, small_config.t_s, grid, gamma=small_config.gamma)
        problem = build_problem(small_config.make_model("gaussian"), grid, y, "jme")
        assert records[0].results["jme"].objective >= problem.merit(guess)

    def test_rejects_negative_run_index(self, small_config):
        with pytest.raises(ValueError, match="run_index"):
            simulate_run(small_config, -1)


class TestMonteCarlo:
    def test_summary_structure(self, small_config, mc_output):
        _, summary, _ = mc_output
        assert summary["n_runs"] == 2
        assert summary["n_complete"] == 2
        assert summary["config"] == small_config.as_dict()
        assert summary["config_sha256"] == config_digest(small_config.as_dict())
        assert summary["quartile_order"] == ["min", "q1", "median", "q3", "max"]
        for name in ("jme", "mee", "pem"):
            entry = summary["estimators"][name]
            assert entry["n_ok"] == 2
            for param in ("a", "b", "d", "sigma_y"):
                q = entry["theta"][param]
                assert len(q) == 5 and q == sorted(q)
            assert len(entry["ise"]) == 5

    def test_csv_medians_match_summary(self, mc_output):
        # recompute the medians from the per-run table with independent code;
        # they must agree exactly, not approximately
        _, summary, out = mc_output
        with open(out / "runs.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert set(r["estimator"] for r in rows) == {"jme", "mee", "pem"}
        for name in ("jme", "mee", "pem"):
            for param in ("a", "b", "d", "sigma_y", "ise"):
                vals = [
                    float(r[param])
                    for r in rows
                    if r["estimator"] == name and r["ok"] == "1"
                ]
                got = (
                    summary["estimators"][name]["ise"][2]
                    if param == "ise"
                    else summary["estimators"][name]["theta"][param][2]
                )
                assert float(np.median(vals)) == got

    def test_single_run_quartiles_collapse(self, small_config, mc_output):
        records, _, _ = mc_output
        summary = summarize(small_config, records[:1])
        q = summary["estimators"]["jme"]["theta"]["a"]
        assert q == [q[0]] * 5

    def test_summary_json_round_trips(self, mc_output):
        _, summary, out = mc_output
        with open(out / "summary.json") as fh:
            assert json.load(fh) == summary

    def test_failure_is_recorded_not_raised(self):
        # an unsolvable estimation setup (zero diffusion cannot be
        # transcribed) must surface as a failed estimator result
        cfg = ExperimentConfig(
            t_final=10.0, n_runs=1, seed=11, sigma_d=0.0, estimators=("mee",)
        )
        rec = run_single(cfg, 0)
        res = rec.results["mee"]
        assert not res.ok
        assert "error" in res.status
        rows_file = io.StringIO()
        from sdestim.harness import records_to_rows, write_rows_csv

        write_rows_csv(records_to_rows([rec]), rows_file)
        body = rows_file.getvalue().splitlines()
        assert len(body) == 2 and "mee" in body[1]

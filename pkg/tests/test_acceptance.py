"""Acceptance suite: one test and one printed pass/fail line per criterion.

Criteria 1-6 are deterministic property checks at tight tolerances; criteria
7-11 reproduce the benchmark's qualitative Monte Carlo findings at desk
scale (20 runs over a 50-second window per experiment), so the two shared
experiment fixtures dominate the runtime (tens of minutes total).
"""

import math

import numpy as np
import pytest

import test_baseline as lin
from test_transcribe import random_decision
from sdestim.baseline import GaussianBelief, pem_neglogpost, run_filter, uks_smooth
from sdestim.harness import ExperimentConfig, initial_guess, run_monte_carlo
from sdestim.model import make_duffing_model
from sdestim.simulate import (
    sample_initial_state,
    sample_measurements_gaussian,
    simulate_order15,
    simulate_order15_batch,
    stream,
)
from sdestim.solve import SolveOptions, solve
from sdestim.transcribe import CollocationGrid, DecisionVector, build_problem

NOMINAL = np.array([1.0, -1.0, 0.2])
MC_SEED = 2


def _line(criterion, ok, detail):
    print(f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)


@pytest.fixture(scope="session")
def gaussian_mc():
    records, summary = run_monte_carlo(ExperimentConfig(kind="gaussian", seed=MC_SEED))
    return records, summary


@pytest.fixture(scope="session")
def outlier_mc():
    records, summary = run_monte_carlo(ExperimentConfig(kind="outlier", seed=MC_SEED))
    return records, summary


def _median(summary, estimator, param):
    entry = summary["estimators"][estimator]
    block = entry["ise"] if param == "ise" else entry["theta"][param]
    return block[2]


def test_criterion_01_merit_gradient_matches_finite_differences():
    grid = CollocationGrid(2.0, 0.25, 0.5)
    rng = np.random.default_rng(314)
    y = 0.3 * rng.standard_normal(grid.n_meas)
    problems = [
        build_problem(make_duffing_model(lik), grid, y, kind)
        for lik in ("gaussian", "student_t")
        for kind in ("jme", "mee")
    ]
    worst = 0.0
    for _ in range(50):
        v = random_decision(problems[0], rng)
        for problem in problems:
            grad = problem.merit_gradient(v)
            fd = np.empty_like(grad)
            for j in range(v.size):
                # step near eps**(1/3) balances truncation and roundoff
                step = 1e-5 * max(1.0, abs(v[j]))
                vp, vm = v.copy(), v.copy()
                vp[j] += step
                vm[j] -= step
                fd[j] = (problem.merit(vp) - problem.merit(vm)) / (2.0 * step)
            rel = np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))
            worst = max(worst, float(rel.max()))
    ok = worst <= 1e-6
    _line(1, ok, f"max relative gradient error {worst:.3e} (tol 1e-6)")
    assert ok


def test_criterion_02_merit_gap_is_half_damping_times_horizon():
    grid = CollocationGrid(2.0, 0.25, 0.5)
    dt = 0.5 * grid.h_c
    rng = np.random.default_rng(271)
    y = 0.3 * rng.standard_normal(grid.n_meas)
    model = make_duffing_model("gaussian")
    jme = build_problem(model, grid, y, "jme")
    mee = build_problem(model, grid, y, "mee")
    worst = 0.0
    for i in range(20):
        theta_nat = np.array(
            [
                rng.uniform(0.5, 2.0),
                rng.uniform(-1.5, 1.5),
                rng.uniform(0.05, 2.0),
                rng.uniform(0.05, 0.5),
            ]
        )
        x0, z0 = sample_initial_state(stream(20, i, 0))
        path = simulate_order15(
            model, x0, z0, theta_nat, dt, grid.t_final, rng=stream(20, i, 1)
        )
        # the divergence is constant (-d) only while the trajectory stays
        # inside the cutoff plateau
        assert np.abs(path.z).max() <= 1000.0
        theta_opt = theta_nat.copy()
        theta_opt[3] = math.log(theta_nat[3])
        v = DecisionVector(
            xe=path.x[::2],
            xm=path.x[1::2],
            ze=path.z[::2],
            zm=path.z[1::2],
            theta=theta_opt,
        ).pack()
        gap = jme.merit(v) - mee.merit(v)
        want = 0.5 * theta_nat[2] * grid.t_final
        worst = max(worst, abs(gap - want) / abs(want))
    ok = worst <= 1e-10
    _line(2, ok, f"max relative identity error {worst:.3e} (tol 1e-10)")
    assert ok


def test_criterion_03_filter_smoother_and_objective_match_linear_closed_form():
    model = lin.make_linear_model(lin.LIN_SD)
    phi, q = lin.exact_discretization(lin.LIN_A, lin.LIN_SD, lin.LIN_DT)
    rng = np.random.default_rng(42)
    y = np.sin(0.08 * np.arange(lin.LIN_N)) + 0.3 * rng.standard_normal(lin.LIN_N)
    m0 = np.zeros(2)
    p0 = 0.16 * np.eye(2)
    ref = lin.kalman_rts(y, phi, q, lin.LIN_SY**2, m0, p0)

    theta = np.array([lin.LIN_A])
    history = run_filter(
        model,
        theta,
        y,
        lin.LIN_DT,
        sigma_y=lin.LIN_SY,
        init_belief=GaussianBelief(m0, p0),
    )
    smoothed = uks_smooth(history)
    gap = 0.0
    for k in range(lin.LIN_N):
        gap = max(gap, np.abs(history.updated[k].mean - ref["mf"][k]).max())
        gap = max(gap, np.abs(history.updated[k].cov - ref["Pf"][k]).max())
        gap = max(gap, np.abs(smoothed[k].mean - ref["ms"][k]).max())
        gap = max(gap, np.abs(smoothed[k].cov - ref["Ps"][k]).max())
    ll_gap = abs(history.loglik - ref["loglik"])
    closed_neglogpost = -(ref["loglik"] + model.theta_log_prior(theta))
    nlp_gap = abs(
        pem_neglogpost(
            theta, y, model, lin.LIN_DT, sigma_y=lin.LIN_SY,
            init_belief=GaussianBelief(m0, p0),
        )
        - closed_neglogpost
    )
    worst = max(gap, ll_gap, nlp_gap)
    ok = worst <= 1e-8
    _line(
        3,
        ok,
        f"moments {gap:.3e}, log-likelihood {ll_gap:.3e}, "
        f"objective {nlp_gap:.3e} (tol 1e-8)",
    )
    assert ok


def test_criterion_04_strong_convergence_slope():
    a, sig, x0, t_final = 1.2, 0.8, 1.0, 1.0
    n_paths = 2000
    model = lin.make_linear_model(sig)
    dts = [0.02, 0.01, 0.005]
    errs = []
    for li, dt in enumerate(dts):
        n_steps = round(t_final / dt)
        rng = stream(2024, li)
        u = rng.standard_normal((n_steps, 2, n_paths, 1))
        dW = math.sqrt(dt) * u[:, 0]
        dZ = 0.5 * dt**1.5 * (u[:, 0] + u[:, 1] / math.sqrt(3.0))
        _, xs, _ = simulate_order15_batch(
            model,
            np.full((n_paths, 1), x0),
            np.zeros((n_paths, 1)),
            np.array([a]),
            dt,
            t_final,
            increments=(dW, dZ),
        )
        # exact transition: X+ = e^{-a dt} X + sig * I, with the stochastic
        # integral I projected onto (dW, dZ) plus an independent residual
        ead = math.exp(-a * dt)
        c1 = (1.0 - ead) / a
        c2 = (1.0 - (1.0 + a * dt) * ead) / a**2
        cov = np.array([[dt, dt**2 / 2], [dt**2 / 2, dt**3 / 3]])
        kappa = np.linalg.solve(cov, np.array([c1, c2]))
        var_resid = (1.0 - math.exp(-2.0 * a * dt)) / (2.0 * a) - np.dot(
            kappa, [c1, c2]
        )
        resid_std = math.sqrt(max(var_resid, 0.0))
        rng_resid = stream(2024, 100 + li)
        xe = np.full(n_paths, x0)
        for k in range(n_steps):
            eta = rng_resid.standard_normal(n_paths)
            xe = ead * xe + sig * (
                kappa[0] * dW[k, :, 0] + kappa[1] * dZ[k, :, 0] + resid_std * eta
            )
        errs.append(float(np.sqrt(np.mean((xs[:, -1, 0] - xe) ** 2))))
    slope = float(np.polyfit(np.log2(dts), np.log2(errs), 1)[0])
    ok = slope >= 1.4
    _line(4, ok, f"strong-convergence slope {slope:.3f} (needs >= 1.4)")
    assert ok


def test_criterion_05_polynomial_paths_have_zero_defects():
    model = make_duffing_model("gaussian")
    c = np.array([0.3, -0.7, 0.4])

    def xf(t):
        return c[0] + c[1] * t + c[2] * t**2

    def zf(t):
        return 0.1 + c[0] * t + 0.5 * c[1] * t**2 + c[2] * t**3 / 3.0

    worst = 0.0
    for h_c, t_s in ((0.25, 0.5), (0.05, 0.1)):
        grid = CollocationGrid(2.0, h_c, t_s)
        problem = build_problem(model, grid, np.zeros(grid.n_meas), "jme")
        dv = DecisionVector(
            xe=xf(grid.times)[:, None],
            xm=xf(grid.mids)[:, None],
            ze=zf(grid.times)[:, None],
            zm=zf(grid.mids)[:, None],
            theta=np.array([1.0, -1.0, 0.2, math.log(0.1)]),
        )
        worst = max(worst, float(np.abs(problem.defects(dv.pack())).max()))
    ok = worst <= 1e-13
    _line(5, ok, f"max defect on cubic/quadratic path {worst:.3e} (tol 1e-13)")
    assert ok


def test_criterion_06_noise_free_data_identifies_drift_parameters():
    theta_true = np.array([1.0, -1.0, 0.2, 1e-4])
    sim_model = make_duffing_model("gaussian", sigma_d=0.0)
    x0, z0 = sample_initial_state(stream(60, 0, 0))
    path = simulate_order15(
        sim_model, x0, z0, theta_true, 0.005, 50.0, rng=stream(60, 0, 1)
    )
    y = sample_measurements_gaussian(path, 0.1, 1e-4, stream(60, 0, 2))
    grid = CollocationGrid(50.0, 0.05, 0.1)
    # estimation needs an invertible diffusion; a small level keeps the
    # fitted path pinned to the deterministic dynamics
    model = make_duffing_model("gaussian", sigma_d=0.05)
    problem = build_problem(model, grid, y, "jme")
    sol = solve(problem, initial_guess(y, 0.1, grid), SolveOptions(rho_init=1e4))
    theta = problem.theta_natural(sol.v_opt.theta)
    err = float(np.abs(theta[:3] - NOMINAL).max())
    ok = err <= 0.02
    _line(6, ok, f"max drift-parameter error {err:.4f} (tol 0.02)")
    assert ok


def test_criterion_07_energy_estimator_underestimates_damping(gaussian_mc):
    _, summary = gaussian_mc
    d_mee = _median(summary, "mee", "d")
    d_jme = _median(summary, "jme", "d")
    n_complete = summary["n_complete"]
    ok = d_mee < d_jme and d_mee < 0.2 and n_complete >= 15
    _line(
        7,
        ok,
        f"median d: mee {d_mee:.4f} < jme {d_jme:.4f} and < 0.2, "
        f"{n_complete}/20 runs complete (needs >= 15)",
    )
    assert ok


def test_criterion_08_map_and_filter_drift_estimates_agree(gaussian_mc):
    _, summary = gaussian_mc
    gaps = {
        p: abs(_median(summary, "jme", p) - _median(summary, "pem", p))
        for p in ("a", "b", "d")
    }
    ok = all(v <= 0.2 for v in gaps.values())
    _line(
        8,
        ok,
        "median |jme - pem| gaps "
        + ", ".join(f"{p}={v:.4f}" for p, v in gaps.items())
        + " (tol 0.2 each)",
    )
    assert ok


def test_criterion_09_map_estimators_underestimate_noise_scale(gaussian_mc):
    _, summary = gaussian_mc
    s_jme = _median(summary, "jme", "sigma_y")
    s_mee = _median(summary, "mee", "sigma_y")
    ok = s_jme < 0.1 and s_mee < 0.1
    _line(
        9,
        ok,
        f"median sigma_y: jme {s_jme:.4f}, mee {s_mee:.4f} (both below 0.1)",
    )
    assert ok


def test_criterion_10_gaussian_noise_state_error_parity(gaussian_mc):
    _, summary = gaussian_mc
    ise_jme = _median(summary, "jme", "ise")
    ise_pem = _median(summary, "pem", "ise")
    ok = ise_jme <= 2.0 * ise_pem
    _line(
        10,
        ok,
        f"median ise: jme {ise_jme:.4f} vs pem {ise_pem:.4f} (within factor 2)",
    )
    assert ok


def test_criterion_11_heavy_tailed_likelihood_beats_filter_on_outliers(outlier_mc):
    _, summary = outlier_mc
    ise_jme = _median(summary, "jme", "ise")
    ise_pem = _median(summary, "pem", "ise")
    ok = ise_jme < ise_pem
    _line(
        11,
        ok,
        f"median ise with outliers: jme {ise_jme:.4f} < pem {ise_pem:.4f}",
    )
    assert ok

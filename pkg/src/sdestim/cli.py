"""Command-line interface: simulate, estimate, mc, check.

Exit codes: 0 on success, 2 on configuration errors (bad JSON, unknown
keys, invalid values, usage errors), 3 when a requested estimator fails or
a Monte Carlo batch completes fewer than 90% of its runs.  ``check`` runs
quick invariant suites and exits 1 on any violation.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np

from .harness import (
    ESTIMATORS,
    ExperimentConfig,
    records_to_rows,
    run_monte_carlo,
    run_single,
    simulate_run,
    write_rows_csv,
)
from .simulate import measurements_to_csv, path_to_csv, write_run_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATOR = 3


class ConfigError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdestim",
        description="State-path and parameter estimation benchmark runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate one ground-truth dataset")
    _common_config_flags(sim)
    sim.add_argument("--run", type=int, default=0, help="run index within the seed")
    sim.add_argument("--out", help="directory for path.csv, measurements.csv, manifest.json")

    est = sub.add_parser("estimate", help="run one estimator on one dataset")
    _common_config_flags(est)
    est.add_argument("--estimator", required=True, choices=ESTIMATORS)
    est.add_argument("--run", type=int, default=0, help="run index within the seed")
    est.add_argument("--out", help="directory for estimate.csv and record.json")

    mc = sub.add_parser("mc", help="run a Monte Carlo experiment")
    _common_config_flags(mc)
    mc.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    mc.add_argument(
        "--experiment",
        choices=("gaussian", "outlier"),
        help="measurement noise kind (overrides the config)",
    )
    mc.add_argument(
        "--paper-scale",
        action="store_true",
        help="full-size experiment: 100 runs over 200 s (gaussian) or 100 s (outlier)",
    )
    mc.add_argument("--out", default="mc_out", help="output directory (default: mc_out)")

    sub.add_parser("check", help="run fast invariant and oracle suites")
    return parser


def _common_config_flags(cmd) -> None:
    cmd.add_argument("--config", help="JSON experiment configuration file")
    cmd.add_argument("--seed", type=int, help="master seed (overrides the config)")


def _load_config(args, **extra) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    data.update(extra)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    path, y = simulate_run(config, args.run)
    if args.out is None:
        path_to_csv(path, sys.stdout)
        return EXIT_OK
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path_to_csv(path, out / "path.csv")
    t_meas = config.t_s * np.arange(y.size)
    measurements_to_csv(t_meas, y, out / "measurements.csv")
    write_run_manifest(
        out / "manifest.json",
        seed={"master": config.seed, "run": args.run},
        config=config.as_dict(),
    )
    print(f"wrote {out / 'path.csv'} ({path.times.size} rows)", file=sys.stderr)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    config = _load_config(args, estimators=[args.estimator])
    record = run_single(config, args.run, keep_paths=True)
    result = record.results[args.estimator]
    if args.out is not None:
        out = pathlib.Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "record.json", "w") as fh:
            json.dump(record.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if result.path is not None:
            traj = result.path
            data = np.column_stack([traj.times, traj.x, traj.z])
            np.savetxt(
                out / "estimate.csv", data, delimiter=",", header="t,x,z", comments=""
            )
    theta = (
        "-" if result.theta is None else np.array2string(result.theta, precision=4)
    )
    print(
        f"{args.estimator}: {result.status}; theta={theta}; "
        f"ise={result.ise if result.ise is not None else float('nan'):.4g}",
        file=sys.stderr,
    )
    return EXIT_OK if result.ok else EXIT_ESTIMATOR


def _cmd_mc(args) -> int:
    extra = {}
    if args.experiment is not None:
        extra["kind"] = args.experiment
    config = _load_config(args, **extra)
    overrides = {}
    if args.paper_scale:
        overrides["n_runs"] = 100
        overrides["t_final"] = 200.0 if config.kind == "gaussian" else 100.0
    if args.runs is not None:
        overrides["n_runs"] = args.runs
    if overrides:
        data = config.as_dict()
        data.update(overrides)
        try:
            config = ExperimentConfig.from_dict(data)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    _, summary = run_monte_carlo(config, args.out, progress=sys.stderr)
    n_ok = summary["n_complete"]
    n = summary["n_runs"]
    print(
        f"{n_ok}/{n} runs complete; results in {args.out}/runs.csv "
        f"and {args.out}/summary.json",
        file=sys.stderr,
    )
    return EXIT_OK if n_ok >= 0.9 * n else EXIT_ESTIMATOR


# ---------------------------------------------------------------------------
# check: fast invariant suites


def _check_merit_gradient() -> str | None:
    from .model import make_duffing_model
    from .transcribe import CollocationGrid, DecisionVector, build_problem

    model = make_duffing_model("gaussian")
    grid = CollocationGrid(2.0, 0.25, 0.5)
    rng = np.random.default_rng(101)
    y = 0.3 * rng.standard_normal(grid.n_meas)
    worst = 0.0
    for kind in ("jme", "mee"):
        problem = build_problem(model, grid, y, kind)
        for _ in range(3):
            K = grid.n_intervals
            theta = np.concatenate(
                [rng.uniform(-2, 2, 3), [np.log(rng.uniform(0.05, 0.5))]]
            )
            dv = DecisionVector(
                xe=rng.standard_normal((K + 1, 1)),
                xm=rng.standard_normal((K, 1)),
                ze=rng.standard_normal((K + 1, 1)),
                zm=rng.standard_normal((K, 1)),
                theta=theta,
            )
            v = dv.pack()
            grad = problem.merit_gradient(v)
            for i in rng.choice(v.size, size=12, replace=False):
                h = 1e-6 * max(1.0, abs(v[i]))
                vp, vm = v.copy(), v.copy()
                vp[i] += h
                vm[i] -= h
                fd = (problem.merit(vp) - problem.merit(vm)) / (2 * h)
                scale = max(abs(grad[i]), abs(fd), 1e-8)
                worst = max(worst, abs(grad[i] - fd) / scale)
    if worst > 1e-6:
        return f"merit gradient mismatch {worst:.2e} > 1e-6"
    return None


def _check_divergence_shift() -> str | None:
    # the two merits must differ by exactly half the integrated drift
    # divergence along the path
    from .model import make_duffing_model
    from .transcribe import CollocationGrid, DecisionVector, build_problem

    model = make_duffing_model("gaussian")
    grid = CollocationGrid(2.0, 0.25, 0.5)
    rng = np.random.default_rng(55)
    y = 0.3 * rng.standard_normal(grid.n_meas)
    jme = build_problem(model, grid, y, "jme")
    mee = build_problem(model, grid, y, "mee")
    h = grid.h_c
    for _ in range(5):
        K = grid.n_intervals
        dv = DecisionVector(
            xe=rng.standard_normal((K + 1, 1)),
            xm=rng.standard_normal((K, 1)),
            ze=rng.standard_normal((K + 1, 1)),
            zm=rng.standard_normal((K, 1)),
            theta=np.concatenate(
                [rng.uniform(-2, 2, 3), [np.log(rng.uniform(0.05, 0.5))]]
            ),
        )
        v = dv.pack()
        div_e = model.drift_div(grid.times, dv.xe, dv.ze, dv.theta)
        div_m = model.drift_div(grid.mids, dv.xm, dv.zm, dv.theta)
        integral = (h / 6.0) * np.sum(div_e[:-1] + 4.0 * div_m + div_e[1:])
        gap = jme.merit(v) - mee.merit(v)
        ref = max(abs(gap), abs(integral), 1.0)
        if abs(gap + 0.5 * integral) > 1e-10 * ref:
            return f"merit gap {gap!r} vs -half divergence integral {-0.5 * integral!r}"
    return None


def _check_collocation_exactness() -> str | None:
    from .model import make_duffing_model
    from .transcribe import CollocationGrid, DecisionVector, build_problem

    model = make_duffing_model("gaussian")
    grid = CollocationGrid(2.0, 0.25, 0.5)
    y = np.zeros(grid.n_meas)
    problem = build_problem(model, grid, y, "jme")
    te, tm = grid.times, grid.mids
    c = np.array([0.3, -0.7, 0.4])  # x = c0 + c1 t + c2 t^2, z' = x

    def xf(t):
        return c[0] + c[1] * t + c[2] * t**2

    def zf(t):
        return 0.1 + c[0] * t + 0.5 * c[1] * t**2 + c[2] * t**3 / 3.0

    dv = DecisionVector(
        xe=xf(te)[:, None],
        xm=xf(tm)[:, None],
        ze=zf(te)[:, None],
        zm=zf(tm)[:, None],
        theta=np.array([1.0, -1.0, 0.2, np.log(0.1)]),
    )
    worst = np.abs(problem.defects(dv.pack())).max()
    if worst > 1e-13:
        return f"polynomial defects {worst:.2e} > 1e-13"
    return None


def _check_filter_moments() -> str | None:
    from scipy.linalg import expm

    from .baseline import GaussianBelief, ukf_predict
    from .model import SdeModel

    a, sd, dt = 0.4, 0.3, 0.25

    def drift(t, x, z, theta):
        theta = np.asarray(theta, dtype=float)
        return -theta[..., 0:1] * np.asarray(x, dtype=float)

    def drift_div(t, x, z, theta):
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(-theta[..., 0], x[..., 0].shape)

    model = SdeModel(
        dim_x=1,
        dim_z=1,
        dim_theta=1,
        diffusion=np.array([[sd]]),
        drift=drift,
        drift_div=drift_div,
        drift_h=lambda t, x, z, theta: np.asarray(x, dtype=float).copy(),
        log_prior=lambda x0, z0, th: 0.0,
        meas_loglik=lambda y, z, th: 0.0,
    )
    sys_a = np.array([[-a, 0.0], [1.0, 0.0]])
    phi = expm(sys_a * dt)
    # controllability Gramian by fine Simpson quadrature
    n = 400
    s = np.linspace(0.0, dt, 2 * n + 1)
    w = np.ones(2 * n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    w *= dt / (2 * n) / 3.0
    g = np.array([[sd], [0.0]])
    q = sum(
        wi * (expm(sys_a * (dt - si)) @ g @ g.T @ expm(sys_a * (dt - si)).T)
        for wi, si in zip(w, s)
    )
    m0 = np.array([0.7, -0.2])
    p0 = np.array([[0.16, 0.02], [0.02, 0.09]])
    belief = ukf_predict(
        model, GaussianBelief(m0, p0), np.array([a]), 0.0, dt
    )
    err = max(
        np.abs(belief.mean - phi @ m0).max(),
        np.abs(belief.cov - (phi @ p0 @ phi.T + q)).max(),
    )
    if err > 1e-8:
        return f"predicted moments deviate from closed form by {err:.2e} > 1e-8"
    return None


def _check_harness_determinism() -> str | None:
    config = ExperimentConfig(t_final=2.0, n_runs=1, seed=0, estimators=("mee",))
    first = run_single(config, 0).canonical()
    second = run_single(config, 0).canonical()
    if first != second:
        return "repeated run_single records differ"
    return None


def _cmd_check(_args) -> int:
    suites = [
        ("merit gradient vs finite differences", _check_merit_gradient),
        ("estimator merit divergence shift", _check_divergence_shift),
        ("collocation defect exactness", _check_collocation_exactness),
        ("filter moments vs linear closed form", _check_filter_moments),
        ("harness determinism", _check_harness_determinism),
    ]
    failed = 0
    for name, fn in suites:
        problem = fn()
        if problem is None:
            print(f"ok: {name}")
        else:
            failed += 1
            print(f"FAIL: {name} ({problem})")
    return EXIT_OK if failed == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "estimate": _cmd_estimate,
        "mc": _cmd_mc,
        "check": _cmd_check,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

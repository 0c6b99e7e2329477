"""Monte Carlo experiment harness for the benchmark oscillator.

One run simulates a ground-truth path, samples measurements, builds a
measurement-driven initial guess, and hands the dataset to each requested
estimator: the two collocation estimators warm-started from the guess and
the filter-based baseline started from the nominal parameters.  Estimates
are scored by the integrated squared error of the state path against the
simulated truth.  ``run_monte_carlo`` repeats this over independent seed
streams and aggregates boxplot statistics.

Everything is deterministic given the configuration: initial state,
simulation noise and measurement noise come from separate streams keyed by
``(run, concern)``, so changing the estimator set, or running a single run
in isolation, reproduces the same data bit for bit.

The initial guess follows the measurement channel: a cubic smoothing
spline z~ is fitted to the samples (knots at every other measurement
instant, smoothing weight chosen by generalized cross-validation), the
rate state is read off as x = z~', and the drift parameters come from a
linear least-squares fit of the oscillator's force balance along the
spline.  The noise scale guess is the sample standard deviation of the
spline residuals.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .baseline import pem_estimate, run_filter, uks_smooth
from .model import SIGMA_INIT, SIGMA_THETA, make_duffing_model
from .simulate import (
    SimPath,
    config_digest,
    sample_initial_state,
    sample_measurements_gaussian,
    sample_measurements_mixture,
    simulate_order15,
    stream,
)
from .solve import SolveOptions, solve
from .transcribe import CollocationGrid, DecisionVector, Trajectory, build_problem

__all__ = [
    "EstimatorResult",
    "ExperimentConfig",
    "McRecord",
    "initial_guess",
    "ise",
    "run_monte_carlo",
    "run_single",
]

KIND_GAUSSIAN = "gaussian"
KIND_OUTLIER = "outlier"
ESTIMATORS = ("jme", "mee", "pem")

MIN_MEASUREMENTS = 10  # below this the spline guess is meaningless
SIGMA_GUESS_FLOOR = 1e-8

CSV_COLUMNS = (
    "run",
    "seed",
    "estimator",
    "ok",
    "status",
    "a",
    "b",
    "d",
    "sigma_y",
    "ise",
    "wall_time",
)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """One Monte Carlo experiment: model nominals, grids, seeds, estimators.

    ``kind`` selects the measurement noise of the simulated data and the
    likelihood used by the collocation estimators: ``"gaussian"`` pairs
    Gaussian noise with the Gaussian likelihood, ``"outlier"`` pairs
    two-component mixture noise with the heavy-tailed likelihood.  The
    filter baseline always uses the Gaussian likelihood.

    Defaults are the benchmark nominals at desk scale (20 runs over a
    50-second window); :meth:`paper_scale` returns the full-size variant.
    """

    kind: str = KIND_GAUSSIAN
    t_final: float = 50.0
    t_s: float = 0.1
    dt: float = 0.005
    h_c: float = 0.05
    n_runs: int = 20
    seed: int = 0
    estimators: tuple = ESTIMATORS
    # drift / noise nominals
    a: float = 1.0
    b: float = -1.0
    d: float = 0.2
    gamma: float = 0.3
    sigma_d: float = 0.1
    sigma_y: float = 0.1
    sigma_init: float = SIGMA_INIT
    sigma_theta: float = SIGMA_THETA
    gamma_shape: float = 1.1
    gamma_scale: float = 10.0
    # mixture noise of the outlier experiment
    p_outlier: float = 0.25
    sigma_outlier: float = 1.0
    sigma_regular: float = 0.2
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (KIND_GAUSSIAN, KIND_OUTLIER):
            raise ValueError(
                f"kind must be '{KIND_GAUSSIAN}' or '{KIND_OUTLIER}'"
            )
        for name in ("t_final", "t_s", "dt", "h_c"):
            if not float(getattr(self, name)) > 0.0:
                raise ValueError(f"{name} must be positive")
        _require_multiple(self.t_final, self.t_s, "t_final / t_s")
        _require_multiple(self.t_s, self.dt, "t_s / dt")
        _require_multiple(self.t_s, self.h_c, "t_s / h_c")
        _require_multiple(self.h_c, self.dt, "h_c / dt")
        if int(self.n_runs) < 1:
            raise ValueError("n_runs must be at least 1")
        self.n_runs = int(self.n_runs)
        self.seed = int(self.seed)
        requested = {str(e).lower() for e in self.estimators}
        unknown = requested - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        self.estimators = tuple(e for e in ESTIMATORS if e in requested)
        for name in ("sigma_d", "sigma_y"):
            if float(getattr(self, name)) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        for name in (
            "sigma_init",
            "sigma_theta",
            "gamma_shape",
            "gamma_scale",
            "sigma_outlier",
            "sigma_regular",
        ):
            if not float(getattr(self, name)) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= float(self.p_outlier) <= 1.0:
            raise ValueError("p_outlier must lie in [0, 1]")
        if not isinstance(self.solver, dict):
            raise ValueError("solver must be a mapping of option overrides")
        valid = {f.name for f in dataclasses.fields(SolveOptions)}
        bad = set(self.solver) - valid
        if bad:
            raise ValueError(f"unknown solver options: {sorted(bad)}")

    @classmethod
    def paper_scale(cls, kind: str = KIND_GAUSSIAN, **overrides) -> "ExperimentConfig":
        """Full-size experiment: 100 runs, 200 s (Gaussian) or 100 s (outlier)."""
        base = {
            "kind": kind,
            "n_runs": 100,
            "t_final": 200.0 if kind == KIND_GAUSSIAN else 100.0,
        }
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        valid = {f.name for f in dataclasses.fields(cls)}
        bad = set(data) - valid
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**data)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["estimators"] = list(self.estimators)
        return out

    def solve_options(self) -> SolveOptions:
        # collocation problems of this size want an aggressive initial
        # penalty; callers can still override it
        opts = {"rho_init": 1e4}
        opts.update(self.solver)
        return SolveOptions(**opts)

    def theta_nominal(self) -> np.ndarray:
        return np.array([self.a, self.b, self.d, self.sigma_y])

    def make_model(self, likelihood: str):
        return make_duffing_model(
            likelihood,
            gamma=self.gamma,
            sigma_d=self.sigma_d,
            sigma_init=self.sigma_init,
            sigma_theta=self.sigma_theta,
            gamma_shape=self.gamma_shape,
            gamma_scale=self.gamma_scale,
        )

    def grid(self) -> CollocationGrid:
        return CollocationGrid(self.t_final, self.h_c, self.t_s)


def _require_multiple(total, step, what):
    k = round(float(total) / float(step))
    if k < 1 or abs(k * float(step) - float(total)) > 1e-9 * max(1.0, abs(total)):
        raise ValueError(f"{what}: {total!r} is not an integer multiple of {step!r}")


# ---------------------------------------------------------------------------
# smoothing spline with generalized cross-validation


def _second_derivative_operator(knots: np.ndarray, p: int) -> sparse.csr_matrix:
    """Map cubic coefficients to the order-1 coefficients of the 2nd derivative.

    Two applications of the standard B-spline differentiation rule; the
    result is a banded (p-2, p) matrix.
    """
    t = knots
    d1 = t[4 : p + 3] - t[1:p]  # (p-1,)
    m1 = sparse.diags_array(
        [-3.0 / d1, 3.0 / d1], offsets=[0, 1], shape=(p - 1, p)
    )
    d2 = t[4 : p + 2] - t[2:p]  # (p-2,)
    m2 = sparse.diags_array(
        [-2.0 / d2, 2.0 / d2], offsets=[0, 1], shape=(p - 2, p - 1)
    )
    return (m2 @ m1).tocsr()


def _curvature_penalty(knots: np.ndarray, p: int) -> sparse.csr_matrix:
    """Gram matrix of second derivatives, integrated over the fit window.

    Second derivatives of a cubic spline are piecewise linear, so two-point
    Gauss quadrature per knot span is exact.
    """
    spans = np.unique(knots)
    a, b = spans[:-1], spans[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    off = half / np.sqrt(3.0)
    pts = np.concatenate([mid - off, mid + off])
    wts = np.concatenate([half, half])
    d2_op = _second_derivative_operator(knots, p)
    base = BSpline.design_matrix(pts, knots[2:-2], 1)  # order-1 basis values
    b2 = base @ d2_op  # (n_pts, p) second-derivative design
    return (b2.multiply(wts[:, None])).T @ b2


def _lower_band(mat, bw: int) -> np.ndarray:
    """Lower-banded storage of a symmetric sparse matrix: ab[d, j] = M[j+d, j]."""
    p = mat.shape[0]
    ab = np.zeros((bw + 1, p))
    for d in range(bw + 1):
        ab[d, : p - d] = mat.diagonal(-d)
    return ab


def _band_inverse_band(cb: np.ndarray) -> np.ndarray:
    """Central band of the inverse from a banded Cholesky factor.

    ``cb`` is the lower-banded factor from ``cholesky_banded`` of an SPD
    matrix M = L L'.  Returns the same-layout band of inv(M), computed by
    the back-substitution recurrence

        S[i, j] = (delta_ij / L[j, j] - sum_k L[k, j] S[i, k]) / L[j, j]

    over k in (j, j+bw], columns swept last to first.  Entries of inv(M)
    outside the band are never needed because L has the same bandwidth.
    """
    bw = cb.shape[0] - 1
    p = cb.shape[1]
    lb = cb.tolist()
    sb = [[0.0] * p for _ in range(bw + 1)]
    for j in range(p - 1, -1, -1):
        jmax = min(bw, p - 1 - j)
        ljj = lb[0][j]
        for dd in range(jmax, 0, -1):
            i = j + dd
            acc = 0.0
            for e in range(1, jmax + 1):
                k = j + e
                lkj = lb[e][j]
                if lkj != 0.0:
                    acc += lkj * sb[abs(i - k)][min(i, k)]
            sb[dd][j] = -acc / ljj
        acc = 0.0
        for e in range(1, jmax + 1):
            acc += lb[e][j] * sb[e][j]
        sb[0][j] = (1.0 / ljj - acc) / ljj
    return np.asarray(sb)


def _gcv_spline(t_meas: np.ndarray, y: np.ndarray):
    """Cubic smoothing spline with knots at every other measurement instant.

    The smoothing weight multiplies the integrated squared second
    derivative and is chosen to minimize the generalized cross-validation
    score over a wide logarithmic grid.  Returns ``(spline, info)``.
    """
    n = t_meas.size
    interior = t_meas[2:-1:2]
    knots = np.concatenate(
        [np.repeat(t_meas[0], 4), interior, np.repeat(t_meas[-1], 4)]
    )
    p = interior.size + 4

    design = BSpline.design_matrix(t_meas, knots, 3).tocsr()
    ata = (design.T @ design).tocsr()
    aty = design.T @ y
    omega = _curvature_penalty(knots, p).tocsr()

    bw = 3
    ata_band = _lower_band(ata, bw)
    omega_band = _lower_band(omega, bw)

    # scale-free grid: lam0 balances the data and penalty terms
    lam0 = ata_band[0].sum() / max(omega_band[0].sum(), 1e-300)
    grid = lam0 * np.logspace(-10.0, 6.0, 33)

    best = (np.inf, None, None)
    for lam in grid:
        band = ata_band + lam * omega_band
        try:
            cb = cholesky_banded(band, lower=True)
        except LinAlgError:
            continue
        coef = cho_solve_banded((cb, True), aty)
        resid = y - design @ coef
        inv_band = _band_inverse_band(cb)
        # tr(H) = tr(M^-1 A'A); both are banded with the same profile
        tr_h = float(np.sum(inv_band[0] * ata_band[0]))
        tr_h += 2.0 * float(np.sum(inv_band[1:] * ata_band[1:]))
        denom = n - tr_h
        if denom <= 1e-8 * n:
            continue
        score = n * float(resid @ resid) / denom**2
        if score < best[0]:
            best = (score, lam, coef)
    if best[1] is None:
        raise RuntimeError("generalized cross-validation found no usable fit")
    score, lam, coef = best
    return BSpline(knots, coef, 3), {"lam": float(lam), "gcv": float(score)}


# ---------------------------------------------------------------------------
# initial guess


def initial_guess(y, t_s: float, grid: CollocationGrid, gamma: float = 0.3):
    """Measurement-driven starting point for the collocation estimators.

    Fits the smoothing spline ``z~`` to the samples, fills the grid with
    ``z = z~`` and ``x = z~'``, and estimates the drift parameters by
    ordinary least squares on the force balance

        z~'' = -a z~^3 - b z~ - d z~' + gamma cos t

    evaluated densely over the window (``gamma`` is held at its nominal
    value).  The noise scale guess is the sample standard deviation of the
    spline residuals at the measurement instants; ``theta`` is returned in
    optimizer coordinates, with the scale entry holding its logarithm.

    A rank-deficient regression (e.g. identically zero data) zeroes the
    drift parameter guesses and emits a warning.  Requires at least
    10 measurements.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("y must be a 1-d array of measurements")
    if y.size < MIN_MEASUREMENTS:
        raise ValueError(f"need at least {MIN_MEASUREMENTS} measurements")
    if y.size != grid.n_meas:
        raise ValueError(
            f"grid expects {grid.n_meas} measurements, got {y.size}"
        )
    if abs(float(t_s) - grid.t_s) > 1e-9 * max(1.0, grid.t_s):
        raise ValueError("t_s does not match the grid's measurement period")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurements must be finite")

    t_meas = grid.times[grid.meas_nodes]
    spline, _ = _gcv_spline(t_meas, y)
    dspline = spline.derivative(1)

    ze = spline(grid.times)[:, None]
    zm = spline(grid.mids)[:, None]
    xe = dspline(grid.times)[:, None]
    xm = dspline(grid.mids)[:, None]

    # force-balance regression on a dense grid (all nodes and midpoints)
    t_dense = np.sort(np.concatenate([grid.times, grid.mids]))
    zt = spline(t_dense)
    zt1 = dspline(t_dense)
    zt2 = spline.derivative(2)(t_dense)
    target = zt2 - gamma * np.cos(t_dense)
    cols = np.column_stack([-(zt**3), -zt, -zt1])
    coef, _, rank, _ = np.linalg.lstsq(cols, target, rcond=None)
    if rank < 3:
        warnings.warn(
            "force-balance regression is rank-deficient; "
            "zeroing the drift parameter guesses",
            stacklevel=2,
        )
        coef = np.zeros(3)

    sigma_guess = float(np.std(y - spline(t_meas), ddof=1))
    sigma_guess = max(sigma_guess, SIGMA_GUESS_FLOOR)
    theta = np.array([coef[0], coef[1], coef[2], np.log(sigma_guess)])
    return DecisionVector(xe=xe, xm=xm, ze=ze, zm=zm, theta=theta)


# ---------------------------------------------------------------------------
# scoring


def ise(truth: SimPath, estimate) -> float:
    """Integrated squared error of an estimated path against simulated truth.

    The estimate is interpolated onto the simulation grid through its own
    interpolant and the squared error of both state channels is integrated
    by the trapezoidal rule.  The estimate must cover the same window as
    the truth.
    """
    times = truth.times
    est_times = np.asarray(estimate.times, dtype=float)
    tol = 1e-9 * max(1.0, abs(times[-1]))
    if abs(est_times[0] - times[0]) > tol or abs(est_times[-1] - times[-1]) > tol:
        raise ValueError(
            "estimate window "
            f"[{est_times[0]}, {est_times[-1]}] does not match the truth "
            f"window [{times[0]}, {times[-1]}]"
        )
    xq, zq = estimate.at(times)
    err = np.sum((truth.x - xq) ** 2, axis=1) + np.sum((truth.z - zq) ** 2, axis=1)
    return float(np.trapezoid(err, times))


# ---------------------------------------------------------------------------
# per-run records


@dataclass
class EstimatorResult:
    """Outcome of one estimator on one dataset."""

    estimator: str
    ok: bool
    status: str
    theta: np.ndarray | None = None  # natural units (a, b, d, sigma_y)
    ise: float | None = None
    objective: float | None = None
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    path: Trajectory | None = None  # populated only on request, never serialized

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            "estimator": self.estimator,
            "ok": bool(self.ok),
            "status": self.status,
            "theta": None if self.theta is None else [float(v) for v in self.theta],
            "ise": None if self.ise is None else float(self.ise),
            "objective": None if self.objective is None else float(self.objective),
            "diagnostics": dict(self.diagnostics),
        }
        if include_timing:
            out["wall_time"] = float(self.wall_time)
        return out


@dataclass
class McRecord:
    """One Monte Carlo run: per-estimator outcomes plus bookkeeping."""

    run: int
    seed: int
    results: dict  # estimator name -> EstimatorResult
    wall_time: float = 0.0

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            "run": int(self.run),
            "seed": int(self.seed),
            "results": {
                name: res.as_dict(include_timing)
                for name, res in sorted(self.results.items())
            },
        }
        if include_timing:
            out["wall_time"] = float(self.wall_time)
        return out

    def canonical(self) -> str:
        """Deterministic serialization; timing fields are excluded."""
        return json.dumps(self.as_dict(include_timing=False), sort_keys=True)


def _failure(name: str, exc: Exception) -> EstimatorResult:
    return EstimatorResult(
        estimator=name,
        ok=False,
        status=f"error: {type(exc).__name__}: {exc}",
    )


def _run_collocation(kind, config, grid, y, guess, truth, keep_paths) -> EstimatorResult:
    likelihood = "student_t" if config.kind == KIND_OUTLIER else "gaussian"
    model = config.make_model(likelihood)
    problem = build_problem(model, grid, y, kind)
    start = time.perf_counter()
    sol = solve(problem, guess, config.solve_options())
    elapsed = time.perf_counter() - start
    theta = problem.theta_natural(sol.v_opt.theta)
    path = problem.trajectory(sol.v_opt)
    score = ise(truth, path)
    return EstimatorResult(
        estimator=kind,
        ok=sol.converged,
        status=sol.status,
        theta=theta,
        ise=score,
        path=path if keep_paths else None,
        objective=float(sol.merit_value),
        diagnostics={
            "outer": sol.iterations.outer,
            "inner": sol.iterations.inner,
            "n_eval": sol.iterations.n_eval,
            "feasibility": float(sol.constraint_violation),
            "stationarity": float(sol.stationarity),
        },
        wall_time=elapsed,
    )


def _run_pem(config, y, truth, keep_paths) -> EstimatorResult:
    model = config.make_model("gaussian")  # the baseline is always Gaussian
    start = time.perf_counter()
    res = pem_estimate(y, model, config.theta_nominal(), config.t_s)
    history = run_filter(model, res.theta, y, config.t_s)
    smoothed = uks_smooth(history)
    elapsed = time.perf_counter() - start
    means = np.array([b.mean for b in smoothed])
    path = Trajectory(
        times=history.times.copy(),
        x=means[:, : model.dim_x],
        z=means[:, model.dim_x :],
        theta=res.theta,
    )
    score = ise(truth, path)
    status = "converged" if res.success else f"lbfgs status {res.status}: {res.message}"
    return EstimatorResult(
        estimator="pem",
        ok=res.success,
        status=status,
        theta=res.theta,
        ise=score,
        path=path if keep_paths else None,
        objective=float(res.neglogpost),
        diagnostics={"n_iter": res.n_iter, "n_eval": res.n_eval},
        wall_time=elapsed,
    )


def simulate_run(config: ExperimentConfig, run_index: int):
    """Ground-truth path and measurements for one run of an experiment.

    Initial state, path noise and measurement noise use three separate
    streams keyed by the run index, so any subset of runs reproduces
    identical data.
    """
    if run_index < 0:
        raise ValueError("run_index must be non-negative")
    model = config.make_model("gaussian")
    x0, z0 = sample_initial_state(
        stream(config.seed, run_index, 0), sigma_init=config.sigma_init
    )
    path = simulate_order15(
        model,
        x0,
        z0,
        config.theta_nominal(),
        config.dt,
        config.t_final,
        rng=stream(config.seed, run_index, 1),
    )
    meas_rng = stream(config.seed, run_index, 2)
    if config.kind == KIND_OUTLIER:
        y = sample_measurements_mixture(
            path,
            config.t_s,
            config.p_outlier,
            config.sigma_outlier,
            config.sigma_regular,
            meas_rng,
        )
    else:
        y = sample_measurements_gaussian(path, config.t_s, config.sigma_y, meas_rng)
    return path, y


def run_single(config: ExperimentConfig, run_index: int, keep_paths=False) -> McRecord:
    """Execute one Monte Carlo run and score every requested estimator.

    Estimator failures are captured in the record, never raised; the other
    estimators still run on the same dataset.  ``keep_paths`` attaches each
    estimator's state path to its result (omitted from serialization).
    """
    t_start = time.perf_counter()
    truth, y = simulate_run(config, run_index)
    results = {}

    guess = None
    if "jme" in config.estimators or "mee" in config.estimators:
        grid = config.grid()
        try:
            guess = initial_guess(y, config.t_s, grid, gamma=config.gamma)
        except Exception as exc:  # noqa: BLE001 - recorded, not raised
            for kind in ("jme", "mee"):
                if kind in config.estimators:
                    results[kind] = _failure(kind, exc)
    for kind in ("jme", "mee"):
        if kind in config.estimators and kind not in results:
            try:
                results[kind] = _run_collocation(
                    kind, config, grid, y, guess, truth, keep_paths
                )
            except Exception as exc:  # noqa: BLE001
                results[kind] = _failure(kind, exc)
    if "pem" in config.estimators:
        try:
            results["pem"] = _run_pem(config, y, truth, keep_paths)
        except Exception as exc:  # noqa: BLE001
            results["pem"] = _failure("pem", exc)

    return McRecord(
        run=run_index,
        seed=config.seed,
        results=results,
        wall_time=time.perf_counter() - t_start,
    )


# ---------------------------------------------------------------------------
# aggregation


def _quartiles(values) -> list:
    """Boxplot statistics: min, first quartile, median, third quartile, max."""
    q = np.percentile(np.asarray(values, dtype=float), [0, 25, 50, 75, 100])
    return [float(v) for v in q]


def records_to_rows(records) -> list:
    """Flatten records into one CSV row per run per estimator."""
    rows = []
    for rec in records:
        for name in ESTIMATORS:
            if name not in rec.results:
                continue
            res = rec.results[name]
            theta = res.theta if res.theta is not None else [np.nan] * 4
            rows.append(
                {
                    "run": rec.run,
                    "seed": rec.seed,
                    "estimator": name,
                    "ok": int(res.ok),
                    "status": res.status,
                    "a": float(theta[0]),
                    "b": float(theta[1]),
                    "d": float(theta[2]),
                    "sigma_y": float(theta[3]),
                    "ise": float(res.ise) if res.ise is not None else np.nan,
                    "wall_time": float(res.wall_time),
                }
            )
    return rows


def write_rows_csv(rows, file) -> None:
    """Write flattened run rows as CSV with full float precision."""

    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return v

    def write_to(fh):
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in CSV_COLUMNS])

    if hasattr(file, "write"):
        write_to(file)
    else:
        with open(file, "w", newline="") as fh:
            write_to(fh)


def summarize(config: ExperimentConfig, records) -> dict:
    """Boxplot statistics per estimator over the completed runs."""
    per_est = {}
    for name in config.estimators:
        done = [
            rec.results[name]
            for rec in records
            if name in rec.results and rec.results[name].ok
        ]
        entry = {
            "n_requested": len(records),
            "n_ok": len(done),
            "theta": None,
            "ise": None,
        }
        if done:
            thetas = np.array([res.theta for res in done])
            entry["theta"] = {
                "a": _quartiles(thetas[:, 0]),
                "b": _quartiles(thetas[:, 1]),
                "d": _quartiles(thetas[:, 2]),
                "sigma_y": _quartiles(thetas[:, 3]),
            }
            entry["ise"] = _quartiles([res.ise for res in done])
        per_est[name] = entry
    n_complete = sum(
        1
        for rec in records
        if all(
            name in rec.results and rec.results[name].ok
            for name in config.estimators
        )
    )
    cfg = config.as_dict()
    return {
        "config": cfg,
        "config_sha256": config_digest(cfg),
        "n_runs": len(records),
        "n_complete": n_complete,
        "estimators": per_est,
        "quartile_order": ["min", "q1", "median", "q3", "max"],
    }


def run_monte_carlo(config: ExperimentConfig, out_dir=None, progress=None):
    """Run every configured Monte Carlo run and aggregate the results.

    Returns ``(records, summary)``.  When ``out_dir`` is given, writes
    ``runs.csv`` (one row per run per estimator) and ``summary.json``
    (boxplot statistics, the configuration echo and its content hash).
    ``progress`` may be a file-like object receiving one line per run.
    """
    records = []
    for i in range(config.n_runs):
        rec = run_single(config, i)
        records.append(rec)
        if progress is not None:
            bits = ", ".join(
                f"{name}:{'ok' if res.ok else 'FAIL'}"
                for name, res in sorted(rec.results.items())
            )
            print(
                f"run {i + 1}/{config.n_runs} [{rec.wall_time:.1f}s] {bits}",
                file=progress,
                flush=True,
            )
    summary = summarize(config, records)
    if out_dir is not None:
        import pathlib

        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(records_to_rows(records), out / "runs.csv")
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return records, summary

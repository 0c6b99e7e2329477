"""Continuous-discrete unscented Kalman filter, smoother, and PEM estimator.

The filter tracks the augmented state ``s = (x, z)`` of an :class:`~sdestim.model.SdeModel`
between measurement instants by integrating the sigma-point moment equations

    dm/dt = E[f_aug(s)],    dP/dt = U + U' + G_aug G_aug'

with ``f_aug = (f, h)``, ``G_aug = [G; 0]`` and ``U`` the state/drift
cross-moment, all expectations taken over sigma points re-drawn at every
evaluation.  Measurements are scalar samples of one state component (a
``z`` component) with Gaussian noise, updated with the standard sigma-point
formulas; the measurement map is linear, so the update coincides with the
exact Kalman update.

The prediction ODEs are integrated with classical fixed-step RK4, step
``min(0.01, dt)`` rounded down to divide the interval evenly.  Sigma points
use the scaling ``alpha = 1, beta = 0, kappa = 3 - dim``, which is exact
for linear maps and matches fourth-order moments of Gaussians.

For parameter estimation, :func:`pem_neglogpost` combines the filter's
prediction-error log-likelihood decomposition with the model's marginal
parameter log prior, and :func:`pem_estimate` minimizes it with a
quasi-Newton iteration over finite-difference gradients, treating the
measurement scale in log coordinates.  Batches of parameter candidates
share one vectorized filter pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .model import SIGMA_INIT

__all__ = [
    "FilterDivergence",
    "FilterHistory",
    "GaussianBelief",
    "PemResult",
    "beliefs_to_csv",
    "pem_estimate",
    "pem_neglogpost",
    "run_filter",
    "ukf_predict",
    "ukf_update",
    "uks_smooth",
]

# fixed integration substep of the moment ODEs between measurements
ODE_MAX_STEP = 0.01

# numerical PSD floor: eigenvalues below -PSD_TOL * scale signal divergence
PSD_TOL = 1e-10
SYM_TOL = 1e-12


class FilterDivergence(RuntimeError):
    """Raised when a covariance stops being numerically PSD or a
    predicted innovation variance is not positive."""


@dataclass
class GaussianBelief:
    """Mean/covariance pair over the augmented state.

    The covariance must be symmetric to 1e-12 and have eigenvalues no
    smaller than -1e-10 (both scaled by its magnitude); violations raise
    ``ValueError`` at construction.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.asarray(self.cov, dtype=float)
        d = self.mean.size
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if self.cov.shape != (d, d):
            raise ValueError("cov must be square with side len(mean)")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise ValueError("belief must be finite")
        scale = max(1.0, float(np.max(np.abs(self.cov))))
        if np.max(np.abs(self.cov - self.cov.T)) > SYM_TOL * scale:
            raise ValueError("cov must be symmetric")
        if d and float(np.min(np.linalg.eigvalsh(self.cov))) < -PSD_TOL * scale:
            raise ValueError("cov must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class FilterHistory:
    """Forward-pass record consumed by :func:`uks_smooth`.

    ``predicted[k]``/``updated[k]`` are the beliefs just before and after
    the update at ``times[k]`` (the belief at ``times[0]`` is the initial
    one, no prediction precedes it).  ``crosscov[k]`` is the covariance
    between the updated state at ``times[k]`` and the predicted state at
    ``times[k+1]``.
    """

    times: np.ndarray
    predicted: list[GaussianBelief]
    updated: list[GaussianBelief]
    crosscov: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray
    loglik_increments: np.ndarray

    @property
    def loglik(self) -> float:
        return float(np.sum(self.loglik_increments))


@dataclass
class PemResult:
    """Outcome of :func:`pem_estimate`; ``theta`` is in natural coordinates."""

    theta: np.ndarray
    neglogpost: float
    success: bool
    status: int
    message: str
    n_iter: int
    n_eval: int


def _ut_weights(d: int):
    """Sigma-point weights and spread for ``alpha=1, beta=0, kappa=3-d``.

    Returns ``(w, scale)`` with ``w`` of length ``2d+1``; mean and
    covariance weights coincide for this parameter choice and the spread
    is ``sqrt(3)`` independent of ``d``.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    w = np.full(2 * d + 1, 1.0 / 6.0)
    w[0] = (3.0 - d) / 3.0
    return w, math.sqrt(3.0)


def _psd_sqrt_batch(P):
    """Matrix square roots ``B`` with ``B B' = P`` for a stack of matrices.

    Tries the triangular factorization of the whole stack and falls back
    to a symmetric eigendecomposition with clipped spectra when any matrix
    fails.  Returns ``(B, bad)`` where ``bad`` flags matrices whose
    smallest eigenvalue is below the PSD tolerance.
    """
    P = np.asarray(P, dtype=float)
    bad = ~np.all(np.isfinite(P), axis=(-2, -1))
    if np.any(bad):
        P = np.where(bad[..., None, None], np.eye(P.shape[-1]), P)
    try:
        return np.linalg.cholesky(P), bad
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(P)
    scale = np.maximum(1.0, np.max(np.abs(P), axis=(-2, -1)))
    bad = bad | (w[..., 0] < -PSD_TOL * scale)
    root = V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
    return root, bad


def _psd_violation(P):
    """Flags for committed covariances that left the numerical PSD cone."""
    P = np.asarray(P, dtype=float)
    finite = np.all(np.isfinite(P), axis=(-2, -1))
    safe = np.where(finite[..., None, None], P, np.eye(P.shape[-1]))
    w = np.linalg.eigvalsh(safe)
    scale = np.maximum(1.0, np.max(np.abs(safe), axis=(-2, -1)))
    return ~finite | (w[..., 0] < -PSD_TOL * scale)


def _sigma_points(m, root, scale):
    # chi_0 = m, chi_i = m +/- scale * column_i(root); shape (B, 2d+1, d)
    spread = scale * np.swapaxes(root, -1, -2)
    return np.concatenate(
        [m[:, None, :], m[:, None, :] + spread, m[:, None, :] - spread], axis=1
    )


def _split_state(model, chi):
    return chi[..., : model.dim_x], chi[..., model.dim_x :]


def _aug_drift(model, t, chi, theta_b):
    x, z = _split_state(model, chi)
    f = model.drift(t, x, z, theta_b)
    h = model.drift_h(t, x, z, theta_b)
    return np.concatenate([np.asarray(f, dtype=float), np.asarray(h, dtype=float)], axis=-1)


def _aug_diffusion_sq(model):
    d = model.dim_x + model.dim_z
    Q = np.zeros((d, d))
    G = model.diffusion
    Q[: model.dim_x, : model.dim_x] = G @ G.T
    return Q


def _moment_rhs(model, t, m, P, C, theta_b, Q, w, spread):
    """Time derivatives of (mean, covariance, cross-covariance).

    ``C`` tracks Cov(s_anchor, s(t)) for the smoother and may be None.
    Stage covariances handed in by the integrator may leave the PSD cone
    transiently; their spectra are clipped for the square root, and
    divergence is judged on committed covariances by the callers.
    Returns a flag array marking members whose cross-covariance solve
    failed outright.
    """
    root, _ = _psd_sqrt_batch(P)
    chi = _sigma_points(m, root, spread)
    ft = _aug_drift(model, t, chi, theta_b)
    fbar = np.einsum("s,bsd->bd", w, ft)
    dev_s = chi - m[:, None, :]
    dev_f = ft - fbar[:, None, :]
    U = np.einsum("s,bsd,bse->bde", w, dev_s, dev_f)
    dP = U + np.swapaxes(U, -1, -2) + Q
    bad = np.zeros(m.shape[0], dtype=bool)
    if C is None:
        dC = None
    else:
        # dC/dt = C P^{-1} U; P^{-1} U estimates the drift Jacobian transpose
        try:
            dC = C @ np.linalg.solve(P, U)
        except np.linalg.LinAlgError:
            dC = np.zeros_like(C)
            bad = np.ones_like(bad)
    return fbar, dP, dC, bad


def _substeps(t0: float, t1: float):
    dt = t1 - t0
    n = max(1, math.ceil(dt / ODE_MAX_STEP - 1e-9))
    return n, dt / n


def _predict_batch(model, t0, t1, m, P, theta_b, track_cross):
    """RK4 integration of the moment ODEs for a batch of beliefs.

    Returns ``(m, P, C, bad)``; ``C`` is the batch of cross-covariances
    Cov(s(t0), s(t1)) when ``track_cross`` and None otherwise.
    """
    B = m.shape[0]
    Q = _aug_diffusion_sq(model)
    w, spread = _ut_weights(m.shape[1])
    C = P.copy() if track_cross else None
    bad = np.zeros(B, dtype=bool)
    if t1 < t0:
        raise ValueError("prediction interval must not be reversed")
    if t1 == t0:
        return m.copy(), P.copy(), C, bad

    n_sub, h = _substeps(t0, t1)
    t = t0
    # overflow/invalid values mark members diverged instead of warning
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _rk4_loop(model, t, h, n_sub, m, P, C, theta_b, Q, w, spread, bad)


def _rk4_loop(model, t, h, n_sub, m, P, C, theta_b, Q, w, spread, bad):
    for _ in range(n_sub):
        km1, kP1, kC1, b1 = _moment_rhs(model, t, m, P, C, theta_b, Q, w, spread)
        km2, kP2, kC2, b2 = _moment_rhs(
            model, t + 0.5 * h, m + 0.5 * h * km1, P + 0.5 * h * kP1,
            None if C is None else C + 0.5 * h * kC1, theta_b, Q, w, spread,
        )
        km3, kP3, kC3, b3 = _moment_rhs(
            model, t + 0.5 * h, m + 0.5 * h * km2, P + 0.5 * h * kP2,
            None if C is None else C + 0.5 * h * kC2, theta_b, Q, w, spread,
        )
        km4, kP4, kC4, b4 = _moment_rhs(
            model, t + h, m + h * km3, P + h * kP3,
            None if C is None else C + h * kC3, theta_b, Q, w, spread,
        )
        m = m + (h / 6.0) * (km1 + 2.0 * km2 + 2.0 * km3 + km4)
        P = P + (h / 6.0) * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4)
        P = 0.5 * (P + np.swapaxes(P, -1, -2))
        if C is not None:
            C = C + (h / 6.0) * (kC1 + 2.0 * kC2 + 2.0 * kC3 + kC4)
        bad = bad | b1 | b2 | b3 | b4
        bad = bad | ~np.all(np.isfinite(m), axis=-1) | ~np.all(np.isfinite(P), axis=(-2, -1))
        if np.any(bad):
            # freeze diverged members on benign values so the rest continue
            m = np.where(bad[:, None], 0.0, m)
            P = np.where(bad[:, None, None], np.eye(P.shape[-1]), P)
        t += h
    return m, P, C, bad


def _update_batch(m, P, y_k, sigma_y, meas_index, w, spread):
    """Sigma-point measurement update of a batch of beliefs.

    The measured quantity is the ``meas_index`` state component plus
    N(0, sigma_y^2) noise.  Returns posterior moments, innovation,
    innovation variance, log-likelihood increment, and a bad flag.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        root, bad = _psd_sqrt_batch(P)
        chi = _sigma_points(m, root, spread)
        ys = chi[..., meas_index]
        yhat = ys @ w
        dev_y = ys - yhat[:, None]
        S = np.einsum("s,bs->b", w, dev_y * dev_y) + sigma_y**2
        Csy = np.einsum("s,bsd,bs->bd", w, chi - m[:, None, :], dev_y)
        bad = bad | ~(S > 0.0)
        S_safe = np.where(S > 0.0, S, 1.0)
        K = Csy / S_safe[:, None]
        e = y_k - yhat
        m_post = m + K * e[:, None]
        P_post = P - S_safe[:, None, None] * (K[:, :, None] * K[:, None, :])
        P_post = 0.5 * (P_post + np.swapaxes(P_post, -1, -2))
        ll = -0.5 * (np.log(2.0 * np.pi * S_safe) + e * e / S_safe)
        bad = bad | ~np.isfinite(ll)
    return m_post, P_post, e, S, ll, bad


def _theta_batch(theta, B):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (B, theta.size))
    # middle axis broadcasts against the sigma-point axis
    return theta[:, None, :]


def ukf_predict(model, belief, theta, t0, t1):
    """Propagate a belief through the SDE moment equations from t0 to t1.

    Fixed-step RK4 over substeps of at most 0.01, sigma points re-drawn
    at every evaluation.  ``t1 == t0`` returns the belief unchanged.
    Raises :class:`FilterDivergence` when the covariance stops being
    numerically PSD along the way.
    """
    m = belief.mean[None, :]
    P = belief.cov[None, :, :]
    theta_b = _theta_batch(theta, 1)
    m1, P1, _, bad = _predict_batch(model, float(t0), float(t1), m, P, theta_b, False)
    if bad[0] or _psd_violation(P1)[0]:
        raise FilterDivergence("covariance lost positive semidefiniteness")
    return GaussianBelief(m1[0], P1[0])


def ukf_update(belief, y_k, sigma_y, meas_index=None):
    """Condition a belief on one scalar measurement of a state component.

    ``meas_index`` defaults to the last component (the noise-free state of
    a scalar system).  Returns ``(posterior, innovation, innovation_var,
    loglik_increment)`` with the Gaussian log-likelihood increment
    ``-(ln 2 pi S + e^2/S)/2``.
    """
    if not sigma_y > 0.0:
        raise ValueError("sigma_y must be positive")
    d = belief.dim
    idx = d - 1 if meas_index is None else int(meas_index)
    if not 0 <= idx < d:
        raise ValueError("meas_index out of range")
    w, spread = _ut_weights(d)
    m, P, e, S, ll, bad = _update_batch(
        belief.mean[None, :], belief.cov[None, :, :], float(y_k),
        np.asarray([sigma_y], dtype=float), idx, w, spread,
    )
    if bad[0] or not S[0] > 0.0:
        raise FilterDivergence("innovation variance is not positive")
    return GaussianBelief(m[0], P[0]), float(e[0]), float(S[0]), float(ll[0])


def default_init_belief(model, sigma_init: float = SIGMA_INIT) -> GaussianBelief:
    """Zero-mean isotropic initial belief matching the sampling prior."""
    d = model.dim_x + model.dim_z
    return GaussianBelief(np.zeros(d), sigma_init**2 * np.eye(d))


def run_filter(model, theta, y, t_s, sigma_y=None, init_belief=None):
    """Forward filtering pass over measurements ``y_k = z(k t_s) + noise``.

    The first measurement is at t = 0 and updates the initial belief
    directly.  ``sigma_y`` defaults to ``theta[model.scale_index]``;
    ``init_belief`` to the zero-mean sampling prior.  Returns a
    :class:`FilterHistory`; raises :class:`FilterDivergence` when the
    filter breaks down.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a non-empty vector")
    if sigma_y is None:
        if model.scale_index is None:
            raise ValueError("model has no scale parameter; pass sigma_y")
        sigma_y = float(theta[model.scale_index])
    if not sigma_y > 0.0:
        raise ValueError("sigma_y must be positive")
    if init_belief is None:
        init_belief = default_init_belief(model)

    d = model.dim_x + model.dim_z
    idx = model.dim_x  # first z component is measured
    n_meas = y.size
    times = np.arange(n_meas) * float(t_s)

    predicted = [init_belief]
    updated = []
    crosscov = np.zeros((max(n_meas - 1, 0), d, d))
    innovations = np.zeros(n_meas)
    innovation_vars = np.zeros(n_meas)
    increments = np.zeros(n_meas)

    belief = init_belief
    for k in range(n_meas):
        if k > 0:
            m, P, C, bad = _predict_batch(
                model, times[k - 1], times[k], belief.mean[None, :],
                belief.cov[None, :, :], _theta_batch(theta, 1), True,
            )
            if bad[0] or _psd_violation(P)[0]:
                raise FilterDivergence("covariance lost positive semidefiniteness")
            crosscov[k - 1] = C[0]
            belief = GaussianBelief(m[0], P[0])
            predicted.append(belief)
        belief, e, S, ll = ukf_update(belief, y[k], sigma_y, meas_index=idx)
        updated.append(belief)
        innovations[k] = e
        innovation_vars[k] = S
        increments[k] = ll

    return FilterHistory(
        times=times,
        predicted=predicted,
        updated=updated,
        crosscov=crosscov,
        innovations=innovations,
        innovation_vars=innovation_vars,
        loglik_increments=increments,
    )


def uks_smooth(history: FilterHistory) -> list[GaussianBelief]:
    """Backward-correction pass producing smoothed beliefs.

    Standard RTS recursion with gains built from the stored forward
    cross-covariances; the final smoothed belief equals the final
    filtered one.
    """
    n = len(history.updated)
    if n == 0:
        raise ValueError("history is empty")
    if len(history.predicted) != n or len(history.crosscov) != n - 1:
        raise ValueError("history is incomplete")
    smoothed = [None] * n
    smoothed[-1] = history.updated[-1]
    for k in range(n - 2, -1, -1):
        m_f = history.updated[k].mean
        P_f = history.updated[k].cov
        m_p = history.predicted[k + 1].mean
        P_p = history.predicted[k + 1].cov
        # gain C P_pred^{-1} via a symmetric solve
        gain = np.linalg.solve(P_p, history.crosscov[k].T).T
        m_s = m_f + gain @ (smoothed[k + 1].mean - m_p)
        P_s = P_f + gain @ (smoothed[k + 1].cov - P_p) @ gain.T
        smoothed[k] = GaussianBelief(m_s, 0.5 * (P_s + P_s.T))
    return smoothed


def beliefs_to_csv(times, beliefs, file) -> None:
    """Write beliefs as CSV with columns ``t, mean..., var...``.

    ``var`` columns are the covariance diagonal.
    """
    times = np.asarray(times, dtype=float)
    if len(beliefs) != times.size:
        raise ValueError("times and beliefs must have the same length")
    d = beliefs[0].dim
    mcols = ["mean"] if d == 1 else [f"mean{i}" for i in range(d)]
    vcols = ["var"] if d == 1 else [f"var{i}" for i in range(d)]
    header = ",".join(["t", *mcols, *vcols])
    means = np.array([b.mean for b in beliefs])
    variances = np.array([np.diag(b.cov) for b in beliefs])
    np.savetxt(
        file, np.column_stack([times, means, variances]),
        delimiter=",", header=header, comments="",
    )


def _filter_loglik_batch(model, thetas, y, t_s, sigma_ys, m0, P0):
    """Measurement log-likelihood of a batch of parameter candidates.

    One vectorized filter pass; returns ``(loglik, bad)`` with diverged
    members flagged instead of raising.
    """
    B, _ = thetas.shape
    d = model.dim_x + model.dim_z
    idx = model.dim_x
    w, spread = _ut_weights(d)
    theta_b = thetas[:, None, :]
    m = np.broadcast_to(m0, (B, d)).copy()
    P = np.broadcast_to(P0, (B, d, d)).copy()
    ll = np.zeros(B)
    bad = ~(sigma_ys > 0.0)
    n_meas = y.size
    for k in range(n_meas):
        if k > 0:
            m, P, _, b = _predict_batch(
                model, (k - 1) * t_s, k * t_s, m, P, theta_b, False
            )
            bad = bad | b
        m, P, _, _, inc, b = _update_batch(
            m, P, float(y[k]), sigma_ys, idx, w, spread
        )
        bad = bad | b
        ll = ll + np.where(bad, 0.0, inc)
    return np.where(bad, -np.inf, ll), bad


def _resolve_sigma(model, theta, sigma_y):
    if sigma_y is not None:
        return float(sigma_y)
    if model.scale_index is None:
        raise ValueError("model has no scale parameter; pass sigma_y")
    return float(np.asarray(theta, dtype=float)[model.scale_index])


def pem_neglogpost(theta, y, model, t_s, sigma_y=None, init_belief=None):
    """Negative log posterior of the prediction-error decomposition.

    Equals ``-(sum_k loglik_increment + theta_log_prior(theta))`` under
    the filter started from the zero-mean sampling prior (overridable via
    ``init_belief``).  Filter divergence and non-positive scales map to
    +inf so minimizers can treat them as infeasible.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.theta_log_prior is None:
        raise ValueError("model has no theta_log_prior")
    sy = _resolve_sigma(model, theta, sigma_y)
    if not sy > 0.0 or not np.all(np.isfinite(theta)):
        return float("inf")
    if init_belief is None:
        init_belief = default_init_belief(model)
    ll, bad = _filter_loglik_batch(
        model, theta[None, :], y, float(t_s), np.asarray([sy]),
        init_belief.mean, init_belief.cov,
    )
    if bad[0]:
        return float("inf")
    return float(-(ll[0] + model.theta_log_prior(theta)))


# objective values substituted for diverged filter passes, and the cap on
# finite-difference gradient entries built from them
_BIG = 1e30
_GRAD_CAP = 1e12
_FD_STEP = 1e-6


def _pack_theta(model, theta):
    packed = np.asarray(theta, dtype=float).copy()
    if model.scale_index is not None:
        packed[model.scale_index] = math.log(packed[model.scale_index])
    return packed


def _unpack_theta(model, packed):
    theta = np.asarray(packed, dtype=float).copy()
    if model.scale_index is not None:
        theta[..., model.scale_index] = np.exp(theta[..., model.scale_index])
    return theta


def pem_estimate(y, model, theta_start, t_s, sigma_y=None, init_belief=None,
                 maxiter=200):
    """Minimize :func:`pem_neglogpost` over the parameters.

    Quasi-Newton (L-BFGS-B) over forward finite-difference gradients with
    relative step 1e-6; the measurement scale is optimized as its
    logarithm.  Each gradient evaluation runs the parameter candidates
    through one shared vectorized filter pass.  Returns a
    :class:`PemResult` carrying the optimizer status.
    """
    theta_start = np.asarray(theta_start, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.theta_log_prior is None:
        raise ValueError("model has no theta_log_prior")
    if model.scale_index is not None and not theta_start[model.scale_index] > 0.0:
        raise ValueError("starting scale must be positive")
    if init_belief is None:
        init_belief = default_init_belief(model)
    q = theta_start.size
    fixed_sigma = None if model.scale_index is not None else _resolve_sigma(
        model, theta_start, sigma_y
    )

    def fun_and_grad(packed):
        steps = _FD_STEP * np.maximum(1.0, np.abs(packed))
        cand = np.vstack([packed, packed + np.diag(steps)])
        thetas = _unpack_theta(model, cand)
        if model.scale_index is not None:
            sigmas = thetas[:, model.scale_index]
        else:
            sigmas = np.full(q + 1, fixed_sigma)
        ll, bad = _filter_loglik_batch(
            model, thetas, y, float(t_s), sigmas,
            init_belief.mean, init_belief.cov,
        )
        prior = np.array([
            model.theta_log_prior(th) if ok else 0.0
            for th, ok in zip(thetas, ~bad)
        ])
        nlp = np.where(bad, _BIG, -(ll + prior))
        nlp = np.where(np.isfinite(nlp), nlp, _BIG)
        grad = np.clip((nlp[1:] - nlp[0]) / steps, -_GRAD_CAP, _GRAD_CAP)
        return nlp[0], grad

    res = scipy.optimize.minimize(
        fun_and_grad, _pack_theta(model, theta_start), jac=True,
        method="L-BFGS-B", options={"maxiter": maxiter},
    )
    theta_hat = _unpack_theta(model, res.x)
    return PemResult(
        theta=theta_hat,
        neglogpost=float(res.fun),
        success=bool(res.success),
        status=int(res.status),
        message=str(res.message),
        n_iter=int(res.nit),
        n_eval=int(res.nfev),
    )

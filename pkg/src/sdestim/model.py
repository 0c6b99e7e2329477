"""System models for SDEs with noise-free substates and sampled measurements.

The model class covers systems of the form

    dX = f(t, X, Z, theta) dt + G dW        noise-driven states X in R^m
    dZ = h(t, X, Z, theta) dt               noise-free states Z in R^n

with constant diffusion G and measurements arriving at discrete instants,
described by a log-likelihood over the sampled noise-free states.  The
benchmark system is a periodically forced oscillator with a cubic stiffness
term, written in this split form with position Z and velocity X.

All model callables follow one batching convention: the state arguments carry
an explicit trailing component axis (``x.shape == (..., m)``,
``z.shape == (..., n)``), ``t`` broadcasts against the leading axes, and
``theta`` is either a flat ``(q,)`` vector or carries its own leading axes
that broadcast against the state's.  Scalar systems still use trailing axes
of size one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "DuffingParams",
    "SdeModel",
    "duffing_drift",
    "duffing_drift_div",
    "duffing_log_prior",
    "gaussian_meas_loglik",
    "make_duffing_model",
    "smootherstep",
    "smootherstep_deriv",
    "student_t_meas_loglik",
    "GAMMA_PRIOR_SHAPE",
    "GAMMA_PRIOR_SCALE",
    "SIGMA_INIT",
    "SIGMA_THETA",
]

LOG_2PI = math.log(2.0 * math.pi)


def _as_float(v) -> float:
    """First element of a scalar or size-1 array, as a Python float."""
    arr = np.asarray(v, dtype=float)
    return float(arr.ravel()[0])

# Default hyperparameters of the sampling/estimation priors.
SIGMA_INIT = 0.4          # std of the Gaussian prior on x0 and z0
SIGMA_THETA = 10.0        # std of the Gaussian prior on the drift parameters
GAMMA_PRIOR_SHAPE = 1.1   # shape r of the gamma prior on sigma_y
GAMMA_PRIOR_SCALE = 10.0  # scale s of the gamma prior on sigma_y


def smootherstep(z):
    """C2 cutoff ramp: 1 for ``|z| <= 1000``, 0 for ``|z| >= 1001``.

    In between the value is ``eta(1001 - |z|)`` with the quintic blend
    ``eta(e) = 6 e^5 - 15 e^4 + 10 e^3``, so the function and its first two
    derivatives are continuous everywhere.
    """
    z = np.asarray(z, dtype=float)
    e = np.clip(1001.0 - np.abs(z), 0.0, 1.0)
    out = e * e * e * (e * (6.0 * e - 15.0) + 10.0)
    return float(out) if out.ndim == 0 else out


def smootherstep_deriv(z):
    """Derivative of :func:`smootherstep` with respect to ``z``.

    Equals ``-sign(z) * eta'(1001 - |z|)`` with ``eta'(e) = 30 e^2 (e-1)^2``;
    identically zero outside the blend band, including at its edges.
    """
    z = np.asarray(z, dtype=float)
    e = np.clip(1001.0 - np.abs(z), 0.0, 1.0)
    deta = 30.0 * e * e * (e - 1.0) ** 2
    out = -np.sign(z) * deta
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DuffingParams:
    """Parameter record for the forced cubic oscillator benchmark.

    ``a`` (cubic stiffness), ``b`` (linear stiffness) and ``d`` (damping) are
    the estimated drift parameters; ``gamma`` is the known forcing amplitude,
    ``sigma_d`` the diffusion level and ``sigma_y`` the measurement scale.
    """

    a: float = 1.0
    b: float = -1.0
    d: float = 0.2
    gamma: float = 0.3
    sigma_d: float = 0.1
    sigma_y: float = 0.1

    def __post_init__(self):
        if not self.sigma_d > 0.0:
            raise ValueError("sigma_d must be positive")
        if not self.sigma_y > 0.0:
            raise ValueError("sigma_y must be positive")

    def theta(self) -> np.ndarray:
        """Estimated-parameter vector ``(a, b, d, sigma_y)``."""
        return np.array([self.a, self.b, self.d, self.sigma_y])


def _drift_core(t, x, z, a, b, d, gamma):
    # phi clips the cubic term far from the origin so the drift is globally
    # Lipschitz; inside |z| <= 1000 it is exactly the forced oscillator.
    phi = smootherstep(z)
    return phi * (-a * z**3 - b * z - d * x + gamma * np.cos(t))


def duffing_drift(t, x, z, params: DuffingParams):
    """Velocity drift ``f(t, x, z)`` of the benchmark oscillator."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    out = _drift_core(t, x, z, params.a, params.b, params.d, params.gamma)
    return float(out) if np.ndim(out) == 0 else out


def duffing_drift_div(t, x, z, params: DuffingParams):
    """Divergence of the benchmark drift with respect to ``x``.

    The drift is affine in ``x`` with slope ``-phi(z) d``, so the divergence
    does not depend on ``t`` or ``x``.
    """
    del t, x
    out = -smootherstep(np.asarray(z, dtype=float)) * params.d
    return float(out) if np.ndim(out) == 0 else out


def _gauss_logpdf(v, sigma):
    return -0.5 * (v / sigma) ** 2 - math.log(sigma) - 0.5 * LOG_2PI


def _gamma_logpdf(v, shape, scale):
    return (
        (shape - 1.0) * math.log(v)
        - v / scale
        - gammaln(shape)
        - shape * math.log(scale)
    )


def duffing_log_prior(
    x0,
    z0,
    params: DuffingParams,
    *,
    sigma_init: float = SIGMA_INIT,
    sigma_theta: float = SIGMA_THETA,
    gamma_shape: float = GAMMA_PRIOR_SHAPE,
    gamma_scale: float = GAMMA_PRIOR_SCALE,
) -> float:
    """Joint log prior density of the initial state and the parameters.

    Independent zero-mean Gaussians on ``a, b, d`` (std ``sigma_theta``) and
    on ``x0, z0`` (std ``sigma_init``), and a gamma density on ``sigma_y``
    (shape ``gamma_shape``, scale ``gamma_scale``).  All additive constants
    are retained, so the value is a true log density.
    """
    if not params.sigma_y > 0.0:
        raise ValueError("sigma_y must be positive")
    val = (
        _gauss_logpdf(_as_float(x0), sigma_init)
        + _gauss_logpdf(_as_float(z0), sigma_init)
        + _gauss_logpdf(params.a, sigma_theta)
        + _gauss_logpdf(params.b, sigma_theta)
        + _gauss_logpdf(params.d, sigma_theta)
        + _gamma_logpdf(params.sigma_y, gamma_shape, gamma_scale)
    )
    return float(val)


def gaussian_meas_loglik(y, z, sigma_y) -> float:
    """Gaussian measurement log-likelihood ``sum_k log N(y_k; z_k, sigma_y^2)``.

    Constants are retained.  ``y`` and ``z`` must have equal length.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape:
        raise ValueError("y and z must have the same shape")
    if not sigma_y > 0.0:
        raise ValueError("sigma_y must be positive")
    r = y - z
    return float(
        np.sum(-0.5 * (r / sigma_y) ** 2) - y.size * (math.log(sigma_y) + 0.5 * LOG_2PI)
    )


def _gaussian_meas_grad(y, z, sigma_y):
    r = np.asarray(y, dtype=float) - np.asarray(z, dtype=float)
    dz = r / sigma_y**2
    dsigma = float(np.sum(r * r) / sigma_y**3 - r.size / sigma_y)
    return dz, dsigma


def student_t_meas_loglik(y, z, sigma_y) -> float:
    """Heavy-tailed measurement log-likelihood (Student-t, 4 degrees of freedom).

    Up to an additive constant,

        sum_k [ -(5/2) log(1 + (y_k - z_k)^2 / (4 sigma_y^2)) - log sigma_y ].
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape:
        raise ValueError("y and z must have the same shape")
    if not sigma_y > 0.0:
        raise ValueError("sigma_y must be positive")
    r = y - z
    return float(
        np.sum(-2.5 * np.log1p(r * r / (4.0 * sigma_y**2))) - y.size * math.log(sigma_y)
    )


def _student_t_meas_grad(y, z, sigma_y):
    r = np.asarray(y, dtype=float) - np.asarray(z, dtype=float)
    den = 4.0 * sigma_y**2 + r * r
    dz = 5.0 * r / den
    dsigma = float(np.sum(5.0 * r * r / den) / sigma_y - r.size / sigma_y)
    return dz, dsigma


def _fd_columns(rebuild, arg, rel_step=1e-6):
    """Central differences of ``rebuild`` along the trailing axis of ``arg``.

    ``rebuild(a)`` evaluates the target at the perturbed array; the result
    gains a trailing axis of size ``arg.shape[-1]``.
    """
    arg = np.asarray(arg, dtype=float)
    p = arg.shape[-1]
    if p == 0:
        return np.zeros(np.asarray(rebuild(arg)).shape + (0,))
    cols = []
    for j in range(p):
        step = rel_step * np.maximum(1.0, np.abs(arg[..., j]))
        up = arg.copy()
        up[..., j] = arg[..., j] + step
        dn = arg.copy()
        dn[..., j] = arg[..., j] - step
        cols.append((rebuild(up) - rebuild(dn)) / (2.0 * step[..., None]))
    return np.stack(cols, axis=-1)


def _fd_scalar_grad(fun, args, index, rel_step=1e-6):
    # forward/backward symmetric difference of a scalar function of vectors
    base = np.asarray(args[index], dtype=float)
    g = np.zeros(base.shape)
    for j in range(base.size):
        step = rel_step * max(1.0, abs(base.flat[j]))
        up = base.copy()
        up.flat[j] += step
        dn = base.copy()
        dn.flat[j] -= step
        a_up = list(args)
        a_up[index] = up
        a_dn = list(args)
        a_dn[index] = dn
        g.flat[j] = (fun(*a_up) - fun(*a_dn)) / (2.0 * step)
    return g


class SdeModel:
    """Container describing one SDE system and its estimation ingredients.

    Parameters
    ----------
    dim_x, dim_z, dim_theta : int
        Number of noise-driven states, noise-free states and estimated
        parameters.  ``dim_z`` and ``dim_theta`` may be zero.
    diffusion : ndarray, shape (dim_x, dim_x)
        Constant diffusion matrix ``G``.  When full-rank its inverse is
        precomputed and cached (``diffusion_inv``); a singular ``G`` is
        accepted for simulation-only use and leaves ``diffusion_inv`` unset.
    drift, drift_h : callable
        Batched drifts ``f(t, x, z, theta) -> (..., dim_x)`` and
        ``h(t, x, z, theta) -> (..., dim_z)``.
    drift_div : callable
        Divergence of ``f`` with respect to ``x``, ``(...,)``-shaped.
        Checked against central finite differences of ``drift`` at
        construction time (100 quasi-random points, relative tolerance 1e-5);
        an inconsistent pair is rejected.
    log_prior : callable
        ``log_prior(x0, z0, theta) -> float`` joint log density of the
        initial state and parameters.
    meas_loglik : callable
        ``meas_loglik(y, z_samples, theta) -> float`` with ``z_samples`` of
        shape ``(N+1, dim_z)``.
    theta_log_prior : callable, optional
        Marginal parameter log prior, used by estimators that marginalize
        the initial state instead of optimizing it.
    drift_jac, drift_div_grad, drift_h_jac, log_prior_grad, meas_loglik_grad :
        callables, optional
        Analytic derivatives (see the corresponding accessor docstrings for
        shapes).  When omitted, central finite differences are used.
    scale_index : int, optional
        Index of a positive scale coordinate in ``theta`` (the measurement
        scale).  Optimizers store that coordinate as its logarithm.
    theta_check : ndarray, optional
        Parameter vectors used by the construction-time divergence check.
        Standard normal draws are used when omitted.
    """

    def __init__(
        self,
        *,
        dim_x: int,
        dim_z: int,
        dim_theta: int,
        diffusion,
        drift,
        drift_div,
        drift_h,
        log_prior,
        meas_loglik,
        theta_log_prior=None,
        drift_jac=None,
        drift_div_grad=None,
        drift_h_jac=None,
        log_prior_grad=None,
        meas_loglik_grad=None,
        theta_log_prior_grad=None,
        scale_index=None,
        theta_check=None,
    ):
        if dim_x < 1:
            raise ValueError("dim_x must be at least 1")
        if dim_z < 0 or dim_theta < 0:
            raise ValueError("dim_z and dim_theta must be non-negative")
        self.dim_x = int(dim_x)
        self.dim_z = int(dim_z)
        self.dim_theta = int(dim_theta)

        G = np.array(diffusion, dtype=float)
        if G.shape != (dim_x, dim_x):
            raise ValueError("diffusion must be square with side dim_x")
        if not np.all(np.isfinite(G)):
            raise ValueError("diffusion must be finite")
        self.diffusion = G
        if np.linalg.matrix_rank(G) == dim_x:
            self.diffusion_inv = np.linalg.inv(G)
            # metric of the energy quadratic form: r' M r = |G^-1 r|^2
            self.energy_metric = self.diffusion_inv.T @ self.diffusion_inv
        else:
            self.diffusion_inv = None
            self.energy_metric = None

        self.drift = drift
        self.drift_div = drift_div
        self.drift_h = drift_h
        self.log_prior = log_prior
        self.meas_loglik = meas_loglik
        self.theta_log_prior = theta_log_prior
        self._drift_jac = drift_jac
        self._drift_div_grad = drift_div_grad
        self._drift_h_jac = drift_h_jac
        self._log_prior_grad = log_prior_grad
        self._meas_loglik_grad = meas_loglik_grad
        self._theta_log_prior_grad = theta_log_prior_grad
        if scale_index is not None and not 0 <= scale_index < dim_theta:
            raise ValueError("scale_index out of range")
        self.scale_index = scale_index

        self._check_divergence(theta_check)

    def _check_divergence(self, theta_check, n_points=100, rel_tol=1e-5):
        # registration-time consistency check of drift_div against central
        # finite differences of drift; rejects mismatched pairs early
        rng = np.random.default_rng(1905)
        t = rng.uniform(0.0, 10.0, n_points)
        x = rng.uniform(-10.0, 10.0, (n_points, self.dim_x))
        z = rng.uniform(-10.0, 10.0, (n_points, self.dim_z))
        if self.dim_theta == 0:
            theta = np.zeros((n_points, 0))
        elif theta_check is None:
            theta = rng.standard_normal((n_points, self.dim_theta))
        else:
            theta_check = np.atleast_2d(np.asarray(theta_check, dtype=float))
            theta = theta_check[rng.integers(0, theta_check.shape[0], n_points)]

        div_fd = np.zeros(n_points)
        for k in range(self.dim_x):
            step = 1e-6 * np.maximum(1.0, np.abs(x[:, k]))
            up = x.copy()
            up[:, k] += step
            dn = x.copy()
            dn[:, k] -= step
            diff = self.drift(t, up, z, theta) - self.drift(t, dn, z, theta)
            div_fd += diff[:, k] / (2.0 * step)
        div = np.asarray(self.drift_div(t, x, z, theta), dtype=float)
        err = np.abs(div_fd - div) / np.maximum(1.0, np.abs(div))
        if not np.all(err <= rel_tol):
            raise ValueError(
                "drift_div disagrees with finite differences of drift "
                f"(max relative error {float(np.max(err)):.3e})"
            )

    # ---- derivative accessors with finite-difference fallbacks ----

    def drift_jac(self, t, x, z, theta):
        """Jacobians of ``f``: ``(f_x, f_z, f_theta)``.

        Shapes ``(..., m, m)``, ``(..., m, n)`` and ``(..., m, q)``; the
        derivative index is the trailing axis.
        """
        if self._drift_jac is not None:
            return self._drift_jac(t, x, z, theta)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        theta = np.asarray(theta, dtype=float)
        fx = _fd_columns(lambda a: self.drift(t, a, z, theta), x)
        fz = _fd_columns(lambda a: self.drift(t, x, a, theta), z)
        ft = _fd_columns(lambda a: self.drift(t, x, z, a), theta)
        return fx, fz, ft

    def drift_div_grad(self, t, x, z, theta):
        """Gradients of the drift divergence: ``(d_x, d_z, d_theta)``."""
        if self._drift_div_grad is not None:
            return self._drift_div_grad(t, x, z, theta)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        theta = np.asarray(theta, dtype=float)

        def scal(fun):
            return lambda a: np.asarray(fun(a), dtype=float)[..., None]

        dx = _fd_columns(scal(lambda a: self.drift_div(t, a, z, theta)), x)[..., 0, :]
        dz = _fd_columns(scal(lambda a: self.drift_div(t, x, a, theta)), z)[..., 0, :]
        dt_ = _fd_columns(scal(lambda a: self.drift_div(t, x, z, a)), theta)[..., 0, :]
        return dx, dz, dt_

    def drift_h_jac(self, t, x, z, theta):
        """Jacobians of ``h``: ``(h_x, h_z, h_theta)``."""
        if self._drift_h_jac is not None:
            return self._drift_h_jac(t, x, z, theta)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        theta = np.asarray(theta, dtype=float)
        hx = _fd_columns(lambda a: self.drift_h(t, a, z, theta), x)
        hz = _fd_columns(lambda a: self.drift_h(t, x, a, theta), z)
        ht = _fd_columns(lambda a: self.drift_h(t, x, z, a), theta)
        return hx, hz, ht

    def log_prior_grad(self, x0, z0, theta):
        """Gradient of the joint log prior: ``(g_x0, g_z0, g_theta)``."""
        if self._log_prior_grad is not None:
            return self._log_prior_grad(x0, z0, theta)
        args = (
            np.asarray(x0, dtype=float),
            np.asarray(z0, dtype=float),
            np.asarray(theta, dtype=float),
        )
        return tuple(_fd_scalar_grad(self.log_prior, args, i) for i in range(3))

    def meas_loglik_grad(self, y, z_samples, theta):
        """Gradient of the measurement log-likelihood: ``(g_z, g_theta)``."""
        if self._meas_loglik_grad is not None:
            return self._meas_loglik_grad(y, z_samples, theta)
        z_samples = np.asarray(z_samples, dtype=float)
        theta = np.asarray(theta, dtype=float)
        gz = _fd_scalar_grad(
            lambda zz: self.meas_loglik(y, zz, theta), (z_samples,), 0
        )
        gt = _fd_scalar_grad(
            lambda th: self.meas_loglik(y, z_samples, th), (theta,), 0
        )
        return gz, gt

    def theta_log_prior_grad(self, theta):
        """Gradient of the marginal parameter log prior."""
        if self.theta_log_prior is None:
            raise ValueError("model has no theta_log_prior")
        if self._theta_log_prior_grad is not None:
            return self._theta_log_prior_grad(theta)
        return _fd_scalar_grad(
            lambda th: self.theta_log_prior(th), (np.asarray(theta, dtype=float),), 0
        )


def make_duffing_model(
    likelihood: str = "gaussian",
    *,
    gamma: float = 0.3,
    sigma_d: float = 0.1,
    sigma_init: float = SIGMA_INIT,
    sigma_theta: float = SIGMA_THETA,
    gamma_shape: float = GAMMA_PRIOR_SHAPE,
    gamma_scale: float = GAMMA_PRIOR_SCALE,
) -> SdeModel:
    """Build the benchmark oscillator as an :class:`SdeModel`.

    The estimated parameter vector is ``theta = (a, b, d, sigma_y)`` with
    ``scale_index = 3``.  ``likelihood`` selects the measurement model,
    ``"gaussian"`` or ``"student_t"``.  ``sigma_d = 0`` is accepted and
    produces a simulation-only model (no diffusion inverse is available, so
    it cannot be transcribed into an estimation problem).

    Analytic Jacobians and gradients are attached for every derivative the
    estimators need.
    """
    if likelihood not in ("gaussian", "student_t"):
        raise ValueError(f"unknown likelihood {likelihood!r}")
    if sigma_d < 0.0:
        raise ValueError("sigma_d must be non-negative")

    def drift(t, x, z, theta):
        theta = np.asarray(theta, dtype=float)
        return _drift_core(
            np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t,
            np.asarray(x, dtype=float),
            np.asarray(z, dtype=float),
            theta[..., 0:1],
            theta[..., 1:2],
            theta[..., 2:3],
            gamma,
        )

    def drift_div(t, x, z, theta):
        del t, x
        theta = np.asarray(theta, dtype=float)
        z = np.asarray(z, dtype=float)
        return -smootherstep(z[..., 0]) * np.broadcast_to(
            theta[..., 2], z[..., 0].shape
        )

    def drift_h(t, x, z, theta):
        del t, z, theta
        return np.asarray(x, dtype=float).copy()

    def drift_jac(t, x, z, theta):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        z1 = np.asarray(z, dtype=float)[..., 0]
        theta = np.asarray(theta, dtype=float)
        a = theta[..., 0]
        b = theta[..., 1]
        d = theta[..., 2]
        phi = smootherstep(z1)
        dphi = smootherstep_deriv(z1)
        core = (
            -a * z1**3 - b * z1 - d * x[..., 0] + gamma * np.cos(t)
        )
        shape = core.shape
        fx = np.broadcast_to(-phi * d, shape)[..., None, None]
        fz = (dphi * core + phi * (-3.0 * a * z1**2 - b))[..., None, None]
        ft = np.zeros(shape + (1, 4))
        ft[..., 0, 0] = -phi * z1**3
        ft[..., 0, 1] = -phi * z1
        ft[..., 0, 2] = -phi * x[..., 0]
        return np.ascontiguousarray(fx), fz, ft

    def drift_div_grad(t, x, z, theta):
        del t
        x = np.asarray(x, dtype=float)
        z1 = np.asarray(z, dtype=float)[..., 0]
        theta = np.asarray(theta, dtype=float)
        d = theta[..., 2]
        shape = np.broadcast_shapes(z1.shape, x[..., 0].shape, d.shape)
        dx = np.zeros(shape + (1,))
        dz = np.broadcast_to(-smootherstep_deriv(z1) * d, shape)[..., None]
        dt_ = np.zeros(shape + (4,))
        dt_[..., 2] = -smootherstep(z1)
        return dx, np.ascontiguousarray(dz), dt_

    def drift_h_jac(t, x, z, theta):
        del t, theta
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        hx = np.broadcast_to(np.eye(1), shape + (1, 1))
        hz = np.zeros(shape + (1, 1))
        ht = np.zeros(shape + (1, 4))
        return hx, hz, ht

    def _params(theta):
        theta = np.asarray(theta, dtype=float)
        return theta[0], theta[1], theta[2], theta[3]

    def log_prior(x0, z0, theta):
        a, b, d, sy = _params(theta)
        if not sy > 0.0:
            raise ValueError("sigma_y must be positive")
        return (
            _gauss_logpdf(_as_float(x0), sigma_init)
            + _gauss_logpdf(_as_float(z0), sigma_init)
            + _gauss_logpdf(a, sigma_theta)
            + _gauss_logpdf(b, sigma_theta)
            + _gauss_logpdf(d, sigma_theta)
            + _gamma_logpdf(sy, gamma_shape, gamma_scale)
        )

    def log_prior_grad(x0, z0, theta):
        a, b, d, sy = _params(theta)
        gx0 = np.array([-_as_float(x0) / sigma_init**2])
        gz0 = np.array([-_as_float(z0) / sigma_init**2])
        gt = np.array(
            [
                -a / sigma_theta**2,
                -b / sigma_theta**2,
                -d / sigma_theta**2,
                (gamma_shape - 1.0) / sy - 1.0 / gamma_scale,
            ]
        )
        return gx0, gz0, gt

    def theta_log_prior(theta):
        a, b, d, sy = _params(theta)
        if not sy > 0.0:
            raise ValueError("sigma_y must be positive")
        return (
            _gauss_logpdf(a, sigma_theta)
            + _gauss_logpdf(b, sigma_theta)
            + _gauss_logpdf(d, sigma_theta)
            + _gamma_logpdf(sy, gamma_shape, gamma_scale)
        )

    def theta_log_prior_grad(theta):
        a, b, d, sy = _params(theta)
        return np.array(
            [
                -a / sigma_theta**2,
                -b / sigma_theta**2,
                -d / sigma_theta**2,
                (gamma_shape - 1.0) / sy - 1.0 / gamma_scale,
            ]
        )

    if likelihood == "gaussian":
        base_ll, base_grad = gaussian_meas_loglik, _gaussian_meas_grad
    else:
        base_ll, base_grad = student_t_meas_loglik, _student_t_meas_grad

    def meas_loglik(y, z_samples, theta):
        sy = float(np.asarray(theta, dtype=float)[3])
        return base_ll(y, np.asarray(z_samples, dtype=float)[..., 0], sy)

    def meas_loglik_grad(y, z_samples, theta):
        sy = float(np.asarray(theta, dtype=float)[3])
        dz, dsy = base_grad(y, np.asarray(z_samples, dtype=float)[..., 0], sy)
        gt = np.zeros(4)
        gt[3] = dsy
        return dz[..., None], gt

    rng = np.random.default_rng(7)
    theta_check = np.column_stack(
        [
            rng.uniform(-3.0 * sigma_theta, 3.0 * sigma_theta, (64, 3)),
            rng.uniform(0.05, 2.0, 64),
        ]
    )

    return SdeModel(
        dim_x=1,
        dim_z=1,
        dim_theta=4,
        diffusion=np.array([[sigma_d]]),
        drift=drift,
        drift_div=drift_div,
        drift_h=drift_h,
        log_prior=log_prior,
        meas_loglik=meas_loglik,
        theta_log_prior=theta_log_prior,
        drift_jac=drift_jac,
        drift_div_grad=drift_div_grad,
        drift_h_jac=drift_h_jac,
        log_prior_grad=log_prior_grad,
        meas_loglik_grad=meas_loglik_grad,
        theta_log_prior_grad=theta_log_prior_grad,
        scale_index=3,
        theta_check=theta_check,
    )

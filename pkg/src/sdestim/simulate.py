"""Strong order-1.5 simulation of SDEs with noise-free substates.

For the system

    dX = f(t, X, Z, theta) dt + G dW
    dZ = h(t, X, Z, theta) dt

with constant diffusion G, one step of the strong order-1.5 Taylor scheme for
additive noise reads

    X+ = X + f D + G DW + (1/2) L0f D^2 + sum_j (Lj f) DZ_j
    Z+ = Z + h D     + (1/2) L0h D^2 + sum_j (Lj h) DZ_j

where D is the step, L0 a = da/dt + (da/dx) f + (da/dz) h
+ (1/2) sum_kl (G G')_kl d2a/dx_k dx_l, and Lj a = sum_k G_kj da/dx_k.  The
correlated increment pair per component is

    DW = sqrt(D) U1,   DZ = (1/2) D^(3/2) (U1 + U2 / sqrt(3)),

with independent standard normals U1, U2, giving Var(DW) = D,
Var(DZ) = D^3/3 and Cov(DW, DZ) = D^2/2.

Drift derivatives are formed by central differences with step
1e-6 * max(1, |coordinate|); analytic Jacobian callbacks on the model are
deliberately not used here, so simulation and estimation derivatives stay
independent of each other.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimPath",
    "measurements_to_csv",
    "path_to_csv",
    "sample_initial_state",
    "sample_measurements_gaussian",
    "sample_measurements_mixture",
    "simulate_order15",
    "simulate_order15_batch",
    "stream",
    "write_run_manifest",
]


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one concern of one run.

    Streams derived from the same ``master_seed`` with different ``key``
    tuples are statistically independent and individually reproducible, so
    parallel Monte Carlo runs can draw simulation, measurement and
    initial-state noise without coordination.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))


def _aligned_count(total: float, step: float, what: str = "interval") -> int:
    if not step > 0.0:
        raise ValueError(f"{what}: step must be positive")
    k = round(total / step)
    if k < 1 or abs(k * step - total) > 1e-9 * max(1.0, abs(total)):
        raise ValueError(
            f"{what}: {total!r} is not a positive integer multiple of {step!r}"
        )
    return int(k)


@dataclass(frozen=True)
class SimPath:
    """One simulated trajectory on a uniform time grid.

    ``x`` has shape ``(n_steps+1, dim_x)`` and ``z`` shape
    ``(n_steps+1, dim_z)``; ``times[0] = 0``.  ``seed`` records the entropy
    of the generator that produced the path, when known.
    """

    dt: float
    times: np.ndarray
    x: np.ndarray
    z: np.ndarray
    seed: str | None = None

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("times must be a 1-d array with at least 2 entries")
        if self.x.shape[0] != self.times.size or self.z.shape[0] != self.times.size:
            raise ValueError("x and z must have one row per time instant")
        spacing = np.diff(self.times)
        if not np.allclose(spacing, self.dt, rtol=0.0, atol=1e-9 * max(1.0, self.dt)):
            raise ValueError("times must be uniformly spaced with spacing dt")

    @property
    def t_final(self) -> float:
        return float(self.times[-1])


def _describe_seed(rng) -> str | None:
    try:
        ss = rng.bit_generator.seed_seq
        return f"entropy={ss.entropy},spawn_key={tuple(ss.spawn_key)}"
    except AttributeError:
        return None


def _stacked_derivatives(model, t, x, z, theta, GGt):
    """Drift values and directional finite differences at one time step.

    Evaluates ``f`` and ``h`` on a single stacked batch of perturbed points
    and assembles values, time derivatives, state Jacobians and the diffusion
    Hessian contraction.  ``x`` is ``(B, m)``, ``z`` is ``(B, n)``.
    """
    B, m = x.shape
    n = z.shape[1]
    ht = 1e-6 * max(1.0, abs(t))
    hx = 1e-6 * np.maximum(1.0, np.abs(x))  # (B, m)
    hz = 1e-6 * np.maximum(1.0, np.abs(z))  # (B, n)

    # rows: base, t+, t-, x+-e_k (2m), z+-e_l (2n)
    rows = 3 + 2 * m + 2 * n
    ts = np.full((rows, B), t)
    ts[1] += ht
    ts[2] -= ht
    xs = np.broadcast_to(x, (rows, B, m)).copy()
    zs = np.broadcast_to(z, (rows, B, n)).copy()
    for k in range(m):
        xs[3 + 2 * k, :, k] += hx[:, k]
        xs[4 + 2 * k, :, k] -= hx[:, k]
    for l in range(n):
        zs[3 + 2 * m + 2 * l, :, l] += hz[:, l]
        zs[4 + 2 * m + 2 * l, :, l] -= hz[:, l]

    f_all = np.asarray(model.drift(ts, xs, zs, theta), dtype=float)
    h_all = np.asarray(model.drift_h(ts, xs, zs, theta), dtype=float)

    out = {}
    for name, a_all, p in (("f", f_all, m), ("h", h_all, n)):
        a0 = a_all[0]
        at = (a_all[1] - a_all[2]) / (2.0 * ht)
        ax = np.empty((B, p, m))
        hess = np.zeros((B, p))
        for k in range(m):
            up, dn = a_all[3 + 2 * k], a_all[4 + 2 * k]
            ax[:, :, k] = (up - dn) / (2.0 * hx[:, k])[:, None]
            if GGt[k, k] != 0.0:
                second = (up - 2.0 * a0 + dn) / (hx[:, k] ** 2)[:, None]
                hess += GGt[k, k] * second
        az = np.empty((B, p, n))
        for l in range(n):
            up, dn = a_all[3 + 2 * m + 2 * l], a_all[4 + 2 * m + 2 * l]
            az[:, :, l] = (up - dn) / (2.0 * hz[:, l])[:, None]
        out[name] = (a0, at, ax, az, hess)

    # off-diagonal diffusion Hessian terms need extra four-point stencils
    for k in range(m):
        for l in range(k + 1, m):
            if GGt[k, l] == 0.0:
                continue
            pts = np.broadcast_to(x, (4, B, m)).copy()
            sgn = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
            for r, (sk, sl) in enumerate(sgn):
                pts[r, :, k] += sk * hx[:, k]
                pts[r, :, l] += sl * hx[:, l]
            tt = np.full((4, B), t)
            zz = np.broadcast_to(z, (4, B, n))
            for name in ("f", "h"):
                fun = model.drift if name == "f" else model.drift_h
                vals = np.asarray(fun(tt, pts, zz, theta), dtype=float)
                mixed = (vals[0] - vals[1] - vals[2] + vals[3]) / (
                    4.0 * hx[:, k] * hx[:, l]
                )[:, None]
                a0, at, ax, az, hess = out[name]
                out[name] = (a0, at, ax, az, hess + 2.0 * GGt[k, l] * mixed)
    return out["f"], out["h"]


def simulate_order15_batch(model, x0, z0, theta, dt, t_final, rng=None, increments=None):
    """Simulate a batch of paths with common ``theta``; returns arrays.

    ``x0``/``z0`` have shape ``(B, m)`` / ``(B, n)``.  Returns
    ``(times, x, z)`` with ``x`` of shape ``(B, n_steps+1, m)``.  Either an
    ``rng`` or a precomputed ``increments = (dW, dZ)`` pair of shape
    ``(n_steps, B, m)`` must be supplied (an all-zero pair makes the scheme
    the deterministic second-order Taylor method).
    """
    x0 = np.asarray(x0, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if x0.ndim != 2 or z0.ndim != 2 or z0.shape[0] != x0.shape[0]:
        raise ValueError("batch initial states must be (B, dim_x) and (B, dim_z)")
    B, m = x0.shape
    n = z0.shape[1]
    if m != model.dim_x or n != model.dim_z:
        raise ValueError("initial state dimensions do not match the model")
    n_steps = _aligned_count(t_final, dt, "simulation horizon")
    times = np.arange(n_steps + 1) * dt

    G = model.diffusion
    GGt = G @ G.T

    if increments is None:
        if rng is None:
            raise ValueError("either rng or increments must be given")
        u = rng.standard_normal((n_steps, 2, B, m))
        dW = math.sqrt(dt) * u[:, 0]
        dZ = 0.5 * dt**1.5 * (u[:, 0] + u[:, 1] / math.sqrt(3.0))
    else:
        dW, dZ = increments
        dW = np.asarray(dW, dtype=float)
        dZ = np.asarray(dZ, dtype=float)
        if dW.shape != (n_steps, B, m) or dZ.shape != (n_steps, B, m):
            raise ValueError("increments must have shape (n_steps, B, m)")

    xs = np.empty((B, n_steps + 1, m))
    zs = np.empty((B, n_steps + 1, n))
    xs[:, 0] = x0
    zs[:, 0] = z0
    x = x0.copy()
    z = z0.copy()
    theta = np.asarray(theta, dtype=float)

    for step in range(n_steps):
        t = times[step]
        (f0, ft, fx, fz, fhess), (h0, ht_, hx_, hz_, hhess) = _stacked_derivatives(
            model, t, x, z, theta, GGt
        )
        l0f = (
            ft
            + np.einsum("bij,bj->bi", fx, f0)
            + np.einsum("bij,bj->bi", fz, h0)
            + 0.5 * fhess
        )
        lf = fx @ G  # (B, m, m), column j = L^j f
        x = (
            x
            + f0 * dt
            + dW[step] @ G.T
            + 0.5 * l0f * dt**2
            + np.einsum("bij,bj->bi", lf, dZ[step])
        )
        if n:
            l0h = (
                ht_
                + np.einsum("bij,bj->bi", hx_, f0)
                + np.einsum("bij,bj->bi", hz_, h0)
                + 0.5 * hhess
            )
            lh = hx_ @ G
            z = (
                z
                + h0 * dt
                + 0.5 * l0h * dt**2
                + np.einsum("bij,bj->bi", lh, dZ[step])
            )
        xs[:, step + 1] = x
        zs[:, step + 1] = z
    return times, xs, zs


def simulate_order15(model, x0, z0, theta, dt, t_final, rng=None, increments=None):
    """Simulate one path of the system; returns a :class:`SimPath`.

    Parameters
    ----------
    model : SdeModel
    x0, z0 : ndarray
        Initial states, shapes ``(dim_x,)`` and ``(dim_z,)``.
    theta : ndarray
        Parameter vector passed through to the drift callables.
    dt : float
        Step size; ``t_final`` must be a positive integer multiple of it.
    t_final : float
        End of the simulation window ``[0, t_final]``.
    rng : numpy.random.Generator, optional
    increments : tuple of ndarray, optional
        Precomputed ``(dW, dZ)`` of shape ``(n_steps, 1, dim_x)``; overrides
        ``rng``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    z0 = np.asarray(z0, dtype=float).reshape(1, -1)
    times, xs, zs = simulate_order15_batch(
        model, x0, z0, theta, dt, t_final, rng=rng, increments=increments
    )
    return SimPath(
        dt=float(dt),
        times=times,
        x=xs[0],
        z=zs[0],
        seed=_describe_seed(rng) if rng is not None else None,
    )


def sample_initial_state(rng, dim_x=1, dim_z=1, sigma_init=0.4):
    """Draw ``(x0, z0)`` from independent zero-mean Gaussians."""
    if not sigma_init > 0.0:
        raise ValueError("sigma_init must be positive")
    x0 = sigma_init * rng.standard_normal(dim_x)
    z0 = sigma_init * rng.standard_normal(dim_z)
    return x0, z0


def _meas_nodes(path: SimPath, t_s: float, component: int):
    stride = _aligned_count(t_s, path.dt, "sampling period")
    n_steps = path.times.size - 1
    if n_steps % stride:
        raise ValueError("simulation horizon is not a multiple of the sampling period")
    z = path.z[::stride, component]
    t = path.times[::stride]
    return t, z


def sample_measurements_gaussian(path: SimPath, t_s, sigma_y, rng, component=0):
    """Noisy samples ``y_k = z(k t_s) + sigma_y eps_k`` with iid normal noise.

    ``sigma_y = 0`` returns the sampled values exactly.  The sample at
    ``t = 0`` is included.
    """
    if sigma_y < 0.0:
        raise ValueError("sigma_y must be non-negative")
    _, z = _meas_nodes(path, t_s, component)
    return z + sigma_y * rng.standard_normal(z.size)


def sample_measurements_mixture(
    path: SimPath, t_s, p_outlier, sigma_outlier, sigma_regular, rng, component=0
):
    """Samples with two-component Gaussian mixture noise.

    Each instant is independently an outlier with probability ``p_outlier``
    (noise std ``sigma_outlier``), otherwise regular (std ``sigma_regular``).
    The outlier mask is drawn first, then one normal deviate per instant.
    """
    if not 0.0 <= p_outlier <= 1.0:
        raise ValueError("p_outlier must lie in [0, 1]")
    if not (sigma_outlier > 0.0 and sigma_regular > 0.0):
        raise ValueError("mixture scales must be positive")
    _, z = _meas_nodes(path, t_s, component)
    outlier = rng.random(z.size) < p_outlier
    scale = np.where(outlier, sigma_outlier, sigma_regular)
    return z + scale * rng.standard_normal(z.size)


def path_to_csv(path: SimPath, file) -> None:
    """Write a path as CSV with columns ``t, x..., z...``."""
    m = path.x.shape[1]
    n = path.z.shape[1]
    xcols = ["x"] if m == 1 else [f"x{i}" for i in range(m)]
    zcols = ["z"] if n == 1 else [f"z{i}" for i in range(n)]
    header = ",".join(["t", *xcols, *zcols])
    data = np.column_stack([path.times, path.x, path.z])
    np.savetxt(file, data, delimiter=",", header=header, comments="")


def measurements_to_csv(times, y, file) -> None:
    """Write measurement instants and values as CSV with columns ``t, y``."""
    times = np.asarray(times, dtype=float)
    y = np.asarray(y, dtype=float)
    if times.shape != y.shape:
        raise ValueError("times and y must have the same length")
    np.savetxt(
        file, np.column_stack([times, y]), delimiter=",", header="t,y", comments=""
    )


def config_digest(config: dict) -> str:
    """Order-independent SHA-256 digest of a JSON-serializable mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_run_manifest(file, *, seed, config: dict) -> None:
    """Write a JSON run manifest carrying the seed and a config hash."""
    manifest = {
        "seed": seed,
        "config": config,
        "config_sha256": config_digest(config),
    }
    if hasattr(file, "write"):
        json.dump(manifest, file, indent=2, sort_keys=True)
    else:
        with open(file, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

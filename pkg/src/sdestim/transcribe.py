"""Collocation transcription of path-space MAP estimation problems.

The estimators maximize, over a state path (x(t), z(t)) on [0, T] and the
parameter vector theta, a merit of the form

    merit = log-likelihood(y | z(t_k), theta)
          + log-prior(x(0), z(0), theta)
          - (1/2) int_0^T div_x f(t, x, z, theta) dt      [jme only]
          - (1/2) int_0^T | G^{-1} (xdot - f(t, x, z, theta)) |^2 dt

subject to the noise-free dynamics zdot = h(t, x, z, theta).  Including the
divergence term makes the merit the joint MAP criterion for the state path
and parameters (the Onsager-Machlup path density); dropping it gives the
minimum-energy criterion, MAP in the space of driving noise realizations.

Transcription uses a uniform grid with endpoint and midpoint values per
interval.  Both integrals are evaluated with Simpson's rule per interval.
``xdot`` at the three quadrature points of interval i is the derivative of
the interpolating quadratic through (x_i, x_{i+1/2}, x_{i+1}):

    xdot(t_i)     = (-3 x_i + 4 x_{i+1/2} - x_{i+1}) / h
    xdot(mid)     = (x_{i+1} - x_i) / h
    xdot(t_{i+1}) = (x_i - 4 x_{i+1/2} + 3 x_{i+1}) / h

The noise-free dynamics enter as Hermite-Simpson defect constraints per
interval and z-component:

    c1 = z_{i+1} - z_i - (h/6) (h_i + 4 h_mid + h_{i+1})
    c2 = z_mid - (z_i + z_{i+1})/2 - (h/8) (h_i - h_{i+1})

which vanish identically whenever z is a polynomial of degree <= 3 with
matching hdot values, so the constraint discretization is third-order exact.

Decision vector layout (flat array): x endpoints (K+1 rows of dim_x), x
midpoints (K rows), z endpoints (K+1 rows of dim_z), z midpoints (K rows),
then theta.  The measurement-scale coordinate of theta (``scale_index``) is
stored as its natural logarithm; the model layer always receives natural
units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "KIND_JME",
    "KIND_MEE",
    "CollocationGrid",
    "CollocationProblem",
    "DecisionVector",
    "Trajectory",
    "build_problem",
]

KIND_JME = "jme"  # joint MAP of path and parameters (with divergence term)
KIND_MEE = "mee"  # minimum-energy / noise-MAP (divergence term dropped)


class CollocationGrid:
    """Uniform collocation grid aligned with the measurement instants.

    Parameters
    ----------
    t_final : float
        End of the window ``[0, t_final]``.
    h_c : float
        Collocation interval length; ``t_final`` must be an integer multiple.
    t_s : float
        Measurement period; must be an integer multiple of ``h_c``, so every
        measurement instant lands exactly on an interval endpoint (never a
        midpoint).

    Attributes
    ----------
    n_intervals : int
    times : ndarray, shape (n_intervals+1,)
        Endpoint node times.
    mids : ndarray, shape (n_intervals,)
        Midpoint times.
    meas_nodes : ndarray of int, shape (n_meas,)
        Endpoint-node index of each measurement instant, starting at t = 0.
    """

    def __init__(self, t_final: float, h_c: float, t_s: float):
        self.n_intervals = _count(t_final, h_c, "t_final / h_c")
        stride = _count(t_s, h_c, "t_s / h_c")
        n_meas_intervals = _count(t_final, t_s, "t_final / t_s")
        self.t_final = float(t_final)
        self.h_c = float(h_c)
        self.t_s = float(t_s)
        self.meas_stride = stride
        self.times = np.arange(self.n_intervals + 1) * self.h_c
        self.mids = self.times[:-1] + 0.5 * self.h_c
        self.meas_nodes = np.arange(n_meas_intervals + 1) * stride

    @property
    def n_meas(self) -> int:
        return self.meas_nodes.size


def _count(total, step, what):
    if not step > 0.0:
        raise ValueError(f"{what}: step must be positive")
    k = round(total / step)
    if k < 1 or abs(k * step - total) > 1e-9 * max(1.0, abs(total)):
        raise ValueError(f"{what}: {total!r} is not an integer multiple of {step!r}")
    return int(k)


@dataclass
class DecisionVector:
    """Structured view of one point in the decision space.

    ``theta`` is stored in the optimizer's coordinates: the scale coordinate
    (if the model declares one) holds ``log(sigma)``.
    """

    xe: np.ndarray  # (K+1, m) x at endpoints
    xm: np.ndarray  # (K,   m) x at midpoints
    ze: np.ndarray  # (K+1, n) z at endpoints
    zm: np.ndarray  # (K,   n) z at midpoints
    theta: np.ndarray  # (q,)

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [
                self.xe.ravel(),
                self.xm.ravel(),
                self.ze.ravel(),
                self.zm.ravel(),
                self.theta,
            ]
        )

    @classmethod
    def unpack(cls, v, n_intervals: int, dim_x: int, dim_z: int, dim_theta: int):
        v = np.asarray(v, dtype=float)
        K, m, n, q = n_intervals, dim_x, dim_z, dim_theta
        sizes = [(K + 1) * m, K * m, (K + 1) * n, K * n, q]
        if v.shape != (sum(sizes),):
            raise ValueError(
                f"flat vector has size {v.size}, expected {sum(sizes)}"
            )
        parts = np.split(v, np.cumsum(sizes)[:-1])
        return cls(
            xe=parts[0].reshape(K + 1, m).copy(),
            xm=parts[1].reshape(K, m).copy(),
            ze=parts[2].reshape(K + 1, n).copy(),
            zm=parts[3].reshape(K, n).copy(),
            theta=parts[4].copy(),
        )


@dataclass
class Trajectory:
    """Estimated state path with natural-units parameters.

    When midpoint arrays are present, evaluation between grid nodes uses the
    per-interval interpolating quadratic; otherwise a cubic spline through
    the nodes is used.
    """

    times: np.ndarray
    x: np.ndarray  # (L, m)
    z: np.ndarray  # (L, n)
    theta: np.ndarray  # natural units
    x_mid: np.ndarray | None = None
    z_mid: np.ndarray | None = None

    def at(self, t):
        """Evaluate ``(x, z)`` at query times inside the window."""
        t = np.asarray(t, dtype=float)
        t0, t1 = self.times[0], self.times[-1]
        if np.any(t < t0 - 1e-9) or np.any(t > t1 + 1e-9):
            raise ValueError("query times outside the trajectory window")
        if self.x_mid is None:
            from scipy.interpolate import CubicSpline

            xq = CubicSpline(self.times, self.x, axis=0)(t)
            zq = CubicSpline(self.times, self.z, axis=0)(t)
            return xq, zq
        h = self.times[1] - self.times[0]
        idx = np.clip(((t - t0) // h).astype(int), 0, self.times.size - 2)
        s = (t - self.times[idx]) / h  # in [0, 1]

        def quad(end, mid):
            e0 = end[idx]
            e1 = end[idx + 1]
            em = mid[idx]
            # Lagrange basis on s in {0, 1/2, 1}
            l0 = (2.0 * s - 1.0) * (s - 1.0)
            lm = 4.0 * s * (1.0 - s)
            l1 = s * (2.0 * s - 1.0)
            return (
                e0 * l0[..., None] + em * lm[..., None] + e1 * l1[..., None]
            )

        return quad(self.x, self.x_mid), quad(self.z, self.z_mid)


def build_problem(model, grid: CollocationGrid, y, kind: str):
    """Assemble the estimation NLP for one dataset.

    ``kind`` selects the merit: ``"jme"`` keeps the drift-divergence term,
    ``"mee"`` drops it.  ``y`` must hold one measurement per grid measurement
    node.  The model's diffusion must be invertible.
    """
    return CollocationProblem(model, grid, y, kind)


class CollocationProblem:
    """Smooth NLP: maximize ``merit(v)`` subject to ``defects(v) = 0``.

    Solvers interact through four callables: :meth:`merit`,
    :meth:`merit_gradient`, :meth:`defects` and :meth:`defect_jacobian`
    (sparse CSR), plus :meth:`bundle` which evaluates all four sharing work.
    Evaluations are pure functions of the flat decision vector; the instance
    itself is immutable after construction, so one problem can be shared
    across threads.
    """

    def __init__(self, model, grid: CollocationGrid, y, kind: str):
        kind = str(kind).lower()
        if kind not in (KIND_JME, KIND_MEE):
            raise ValueError(f"kind must be '{KIND_JME}' or '{KIND_MEE}'")
        if model.diffusion_inv is None:
            raise ValueError("estimation requires an invertible diffusion")
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size != grid.n_meas:
            raise ValueError(
                f"need {grid.n_meas} measurements for this grid, got {y.size}"
            )
        self.model = model
        self.grid = grid
        self.y = y
        self.kind = kind
        self.dim_x = model.dim_x
        self.dim_z = model.dim_z
        self.dim_theta = model.dim_theta

        K, m, n, q = grid.n_intervals, self.dim_x, self.dim_z, self.dim_theta
        self.n_dec = (2 * K + 1) * (m + n) + q
        self.n_con = 2 * K * n

        # sparsity pattern of the defect Jacobian, built once
        self._jac_rows, self._jac_cols = self._jacobian_pattern()

    # ---- layout helpers ----

    def unpack(self, v) -> DecisionVector:
        return DecisionVector.unpack(
            v, self.grid.n_intervals, self.dim_x, self.dim_z, self.dim_theta
        )

    def theta_natural(self, theta_packed):
        th = np.array(theta_packed, dtype=float)
        si = self.model.scale_index
        if si is not None:
            th[si] = np.exp(th[si])
        return th

    def theta_packed(self, theta_natural):
        th = np.array(theta_natural, dtype=float)
        si = self.model.scale_index
        if si is not None:
            if not th[si] > 0.0:
                raise ValueError("scale parameter must be positive")
            th[si] = np.log(th[si])
        return th

    def trajectory(self, v) -> Trajectory:
        dv = v if isinstance(v, DecisionVector) else self.unpack(v)
        return Trajectory(
            times=self.grid.times.copy(),
            x=dv.xe.copy(),
            z=dv.ze.copy(),
            theta=self.theta_natural(dv.theta),
            x_mid=dv.xm.copy(),
            z_mid=dv.zm.copy(),
        )

    # ---- merit ----

    def _as_flat(self, v):
        if isinstance(v, DecisionVector):
            return v.pack()
        return np.asarray(v, dtype=float)

    def merit(self, v) -> float:
        return self._merit_impl(self._as_flat(v), want_grad=False)[0]

    def merit_gradient(self, v) -> np.ndarray:
        return self._merit_impl(self._as_flat(v), want_grad=True)[1]

    def _merit_impl(self, v, want_grad):
        # line searches may probe extreme points; overflow shows up as a
        # -inf merit rather than as warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self._merit_impl_inner(v, want_grad)

    def _merit_impl_inner(self, v, want_grad):
        dv = self.unpack(v)
        grid = self.grid
        model = self.model
        h = grid.h_c
        K = grid.n_intervals
        theta = self.theta_natural(dv.theta)
        si = model.scale_index

        if si is not None and not theta[si] > 0.0:
            # log-scale coordinate underflowed to zero
            return -np.inf, (np.zeros(self.n_dec) if want_grad else None)

        te, tm = grid.times, grid.mids
        xe, xm, ze, zm = dv.xe, dv.xm, dv.ze, dv.zm

        fe = np.asarray(model.drift(te, xe, ze, theta), dtype=float)
        fm = np.asarray(model.drift(tm, xm, zm, theta), dtype=float)

        w0 = (-3.0 * xe[:-1] + 4.0 * xm - xe[1:]) / h
        wm = (xe[1:] - xe[:-1]) / h
        w1 = (xe[:-1] - 4.0 * xm + 3.0 * xe[1:]) / h
        r0 = w0 - fe[:-1]
        rm = wm - fm
        r1 = w1 - fe[1:]

        M = model.energy_metric
        s0 = r0 @ M
        sm = rm @ M
        s1 = r1 @ M
        energy = (h / 6.0) * float(
            np.sum(s0 * r0) + 4.0 * np.sum(sm * rm) + np.sum(s1 * r1)
        )

        if self.kind == KIND_JME:
            de = np.asarray(model.drift_div(te, xe, ze, theta), dtype=float)
            dm = np.asarray(model.drift_div(tm, xm, zm, theta), dtype=float)
            div_int = (h / 6.0) * float(np.sum(de[:-1]) + 4.0 * np.sum(dm) + np.sum(de[1:]))
        else:
            div_int = 0.0

        z_meas = ze[grid.meas_nodes]
        loglik = model.meas_loglik(self.y, z_meas, theta)
        prior = model.log_prior(xe[0], ze[0], theta)
        val = float(loglik + prior - 0.5 * div_int - 0.5 * energy)
        if not np.isfinite(val):
            val = -np.inf
        if not want_grad:
            return val, None

        # ---- gradient ----
        g_xe = np.zeros_like(xe)
        g_xm = np.zeros_like(xm)
        g_ze = np.zeros_like(ze)
        g_zm = np.zeros_like(zm)
        g_th = np.zeros(self.dim_theta)

        # energy, dependence through the interpolant derivative w
        g_xe[:-1] += 0.5 * s0 + (2.0 / 3.0) * sm - (1.0 / 6.0) * s1
        g_xe[1:] += (1.0 / 6.0) * s0 - (2.0 / 3.0) * sm - 0.5 * s1
        g_xm += -(2.0 / 3.0) * s0 + (2.0 / 3.0) * s1

        # energy, dependence through the drift at the quadrature points
        fxe, fze, fte = model.drift_jac(te, xe, ze, theta)
        fxm, fzm, ftm = model.drift_jac(tm, xm, zm, theta)
        a_e = np.zeros_like(fe)
        a_e[:-1] += s0
        a_e[1:] += s1
        a_m = 4.0 * sm
        c = h / 6.0
        g_xe += c * np.einsum("kij,ki->kj", fxe, a_e)
        g_ze += c * np.einsum("kij,ki->kj", fze, a_e)
        g_th += c * np.einsum("kij,ki->j", fte, a_e)
        g_xm += c * np.einsum("kij,ki->kj", fxm, a_m)
        g_zm += c * np.einsum("kij,ki->kj", fzm, a_m)
        g_th += c * np.einsum("kij,ki->j", ftm, a_m)

        if self.kind == KIND_JME:
            dde = model.drift_div_grad(te, xe, ze, theta)
            ddm = model.drift_div_grad(tm, xm, zm, theta)
            we = np.ones(K + 1)
            we[1:-1] = 2.0
            cd = -h / 12.0
            g_xe += cd * we[:, None] * dde[0]
            g_ze += cd * we[:, None] * dde[1]
            g_th += cd * np.einsum("k,kj->j", we, dde[2])
            g_xm += 4.0 * cd * ddm[0]
            g_zm += 4.0 * cd * ddm[1]
            g_th += 4.0 * cd * np.sum(ddm[2], axis=0)

        gz_meas, gt_meas = model.meas_loglik_grad(self.y, z_meas, theta)
        np.add.at(g_ze, grid.meas_nodes, gz_meas)
        g_th += gt_meas

        gx0, gz0, gt_prior = model.log_prior_grad(xe[0], ze[0], theta)
        g_xe[0] += gx0
        g_ze[0] += gz0
        g_th += gt_prior

        if si is not None:
            g_th[si] *= theta[si]  # chain rule for the log-scale coordinate

        grad = np.concatenate(
            [g_xe.ravel(), g_xm.ravel(), g_ze.ravel(), g_zm.ravel(), g_th]
        )
        if not np.all(np.isfinite(grad)):
            grad = np.zeros_like(grad)
        return val, grad

    # ---- defects ----

    def defects(self, v) -> np.ndarray:
        return self._defects_impl(self._as_flat(v), want_jac=False)[0]

    def defect_jacobian(self, v) -> sp.csr_matrix:
        return self._defects_impl(self._as_flat(v), want_jac=True)[1]

    def _defects_impl(self, v, want_jac):
        dv = self.unpack(v)
        grid = self.grid
        model = self.model
        h = grid.h_c
        K = grid.n_intervals
        n = self.dim_z
        theta = self.theta_natural(dv.theta)

        he = np.asarray(model.drift_h(grid.times, dv.xe, dv.ze, theta), dtype=float)
        hm = np.asarray(model.drift_h(grid.mids, dv.xm, dv.zm, theta), dtype=float)

        c1 = dv.ze[1:] - dv.ze[:-1] - (h / 6.0) * (he[:-1] + 4.0 * hm + he[1:])
        c2 = (
            dv.zm
            - 0.5 * (dv.ze[:-1] + dv.ze[1:])
            - (h / 8.0) * (he[:-1] - he[1:])
        )
        defects = np.stack([c1, c2], axis=1).reshape(2 * K * n)
        if not want_jac:
            return defects, None

        hxe, hze, hte = model.drift_h_jac(grid.times, dv.xe, dv.ze, theta)
        hxm, hzm, htm = model.drift_h_jac(grid.mids, dv.xm, dv.zm, theta)
        si = model.scale_index
        if si is not None:
            hte = hte.copy()
            htm = htm.copy()
            hte[..., si] *= theta[si]
            htm[..., si] *= theta[si]

        vals = self._jacobian_values(h, K, n, hxe, hze, hte, hxm, hzm, htm)
        jac = sp.csr_matrix(
            (vals, (self._jac_rows, self._jac_cols)),
            shape=(self.n_con, self.n_dec),
        )
        return defects, jac

    def bundle(self, v):
        """Evaluate ``(merit, gradient, defects, jacobian)`` at one point."""
        v = self._as_flat(v)
        val, grad = self._merit_impl(v, want_grad=True)
        c, jac = self._defects_impl(v, want_jac=True)
        return val, grad, c, jac

    # ---- defect Jacobian assembly ----
    #
    # Rows are ordered interval-major: for interval i, first the dim_z rows
    # of c1, then the dim_z rows of c2.  Per (interval, block) the nonzero
    # column blocks are:
    #   c1: ze_i, ze_{i+1}, zm_i, xe_i, xe_{i+1}, xm_i, theta
    #   c2: ze_i, ze_{i+1}, zm_i, xe_i, xe_{i+1},        theta
    # with values
    #   c1/ze_i     = -I - (h/6) hz_i        c2/ze_i     = -I/2 - (h/8) hz_i
    #   c1/ze_{i+1} =  I - (h/6) hz_{i+1}    c2/ze_{i+1} = -I/2 + (h/8) hz_{i+1}
    #   c1/zm_i     = -(2h/3) hz_mid         c2/zm_i     =  I
    #   c1/xe_i     = -(h/6) hx_i            c2/xe_i     = -(h/8) hx_i
    #   c1/xe_{i+1} = -(h/6) hx_{i+1}        c2/xe_{i+1} =  (h/8) hx_{i+1}
    #   c1/xm_i     = -(2h/3) hx_mid
    #   c1/theta    = -(h/6)(ht_i + 4 ht_mid + ht_{i+1})
    #   c2/theta    = -(h/8)(ht_i - ht_{i+1})

    def _block_layout(self):
        K, m, n, q = (
            self.grid.n_intervals,
            self.dim_x,
            self.dim_z,
            self.dim_theta,
        )
        o_xe = 0
        o_xm = (K + 1) * m
        o_ze = o_xm + K * m
        o_zm = o_ze + (K + 1) * n
        o_th = o_zm + K * n
        return o_xe, o_xm, o_ze, o_zm, o_th

    def _jacobian_pattern(self):
        K, m, n, q = (
            self.grid.n_intervals,
            self.dim_x,
            self.dim_z,
            self.dim_theta,
        )
        o_xe, o_xm, o_ze, o_zm, o_th = self._block_layout()
        rows, cols = [], []
        i = np.arange(K)

        def add(cbase, col_dim, row_block):
            # row_block: 0 for c1, 1 for c2; rows are (i, block, component)
            r = (2 * i[:, None, None] + row_block) * n + np.arange(n)[None, :, None]
            cmat = cbase[:, None, None] + np.arange(col_dim)[None, None, :]
            rows.append(np.broadcast_to(r, (K, n, col_dim)).ravel())
            cols.append(np.broadcast_to(cmat, (K, n, col_dim)).ravel())

        for block in (0, 1):
            add(o_ze + n * i, n, block)        # ze_i
            add(o_ze + n * (i + 1), n, block)  # ze_{i+1}
            add(o_zm + n * i, n, block)        # zm_i
            add(o_xe + m * i, m, block)        # xe_i
            add(o_xe + m * (i + 1), m, block)  # xe_{i+1}
            if block == 0:
                add(o_xm + m * i, m, block)    # xm_i
            if q:
                add(np.full(K, o_th), q, block)  # theta
        return np.concatenate(rows), np.concatenate(cols)

    def _jacobian_values(self, h, K, n, hxe, hze, hte, hxm, hzm, htm):
        eye = np.eye(n)
        c1_zi = -eye - (h / 6.0) * hze[:-1]
        c1_zi1 = eye - (h / 6.0) * hze[1:]
        c1_zm = -(2.0 * h / 3.0) * hzm
        c1_xi = -(h / 6.0) * hxe[:-1]
        c1_xi1 = -(h / 6.0) * hxe[1:]
        c1_xm = -(2.0 * h / 3.0) * hxm
        c2_zi = -0.5 * eye - (h / 8.0) * hze[:-1]
        c2_zi1 = -0.5 * eye + (h / 8.0) * hze[1:]
        c2_zm = np.broadcast_to(eye, (K, n, n))
        c2_xi = -(h / 8.0) * hxe[:-1]
        c2_xi1 = (h / 8.0) * hxe[1:]

        parts = [c1_zi, c1_zi1, c1_zm, c1_xi, c1_xi1, c1_xm]
        if self.dim_theta:
            c1_th = -(h / 6.0) * (hte[:-1] + 4.0 * htm + hte[1:])
            parts.append(c1_th)
        parts += [c2_zi, c2_zi1, c2_zm, c2_xi, c2_xi1]
        if self.dim_theta:
            c2_th = -(h / 8.0) * (hte[:-1] - hte[1:])
            parts.append(c2_th)
        return np.concatenate([np.ascontiguousarray(p).ravel() for p in parts])

    # ---- diagnostics ----

    def dump_json(self, file) -> None:
        """Write the problem skeleton (layout, grid, sizes) as JSON."""
        o_xe, o_xm, o_ze, o_zm, o_th = self._block_layout()
        doc = {
            "kind": self.kind,
            "n_decision": self.n_dec,
            "n_constraints": self.n_con,
            "n_intervals": self.grid.n_intervals,
            "h_c": self.grid.h_c,
            "node_times": self.grid.times.tolist(),
            "meas_nodes": self.grid.meas_nodes.tolist(),
            "layout": {
                "x_endpoints": o_xe,
                "x_midpoints": o_xm,
                "z_endpoints": o_ze,
                "z_midpoints": o_zm,
                "theta": o_th,
            },
            "scale_index": self.model.scale_index,
        }
        if hasattr(file, "write"):
            json.dump(doc, file, indent=2)
        else:
            with open(file, "w") as fh:
                json.dump(doc, fh, indent=2)

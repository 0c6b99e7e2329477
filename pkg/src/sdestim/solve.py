"""Equality-constrained NLP solver for the collocation estimators.

The solver maximizes ``problem.merit(v)`` subject to ``problem.defects(v) = 0``
with an augmented-Lagrangian outer loop around a limited-memory BFGS inner
minimizer using a strong-Wolfe line search.  Internally it minimizes
``F(v) = -merit(v)``; the augmented Lagrangian is

    L_A(v; lam, rho) = F(v) + lam' c(v) + (rho/2) |c(v)|^2

Multipliers are reported in the maximization convention: at a converged
point ``grad merit(v) + J(v)' multipliers ~= 0``, so the stored multipliers
are the negative of the internal minimization multipliers.

Everything is deterministic: identical inputs and options produce identical
iterate sequences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KktReport",
    "NlpSolution",
    "SolveOptions",
    "check_kkt",
    "solve",
]

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_LINE_SEARCH = "line-search-failure"


@dataclass
class SolveOptions:
    """Tuning knobs; the defaults are documented choices, not tuned fits.

    ``tol_g`` is scaled by ``1 + |merit|`` at the candidate point, so merit
    rescaling does not move the convergence boundary.  The inner minimizer
    stops at gradient norm ``max(0.1 * tol_g_effective, 0.1 * feasibility)``:
    solving the subproblem far beyond the accuracy of the current multiplier
    estimate is wasted work.
    """

    tol_c: float = 1e-8  # defect infinity-norm at convergence
    tol_g: float = 1e-6  # stationarity infinity-norm, scaled by 1 + |merit|
    max_outer: int = 50
    max_inner: int = 2000  # L-BFGS iterations per outer iteration
    memory: int = 20  # correction pairs
    rho_init: float = 10.0
    rho_growth: float = 10.0
    feas_drop: float = 0.25  # required violation decrease per outer iteration
    lambda_max: float = 1e8  # multiplier safeguard
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_ls: int = 30  # line-search evaluations per step
    trace: object = None  # path or file-like; per-iteration CSV when set
    multipliers: np.ndarray | None = None  # warm start (maximization sign)


@dataclass
class IterationCounts:
    outer: int = 0
    inner: int = 0
    n_eval: int = 0


@dataclass
class NlpSolution:
    v_opt: object  # DecisionVector when the problem has unpack(), else flat
    merit_value: float
    constraint_violation: float
    iterations: IterationCounts
    status: str
    multipliers: np.ndarray
    stationarity: float
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


@dataclass
class KktReport:
    """First-order optimality residuals of the maximization problem."""

    stationarity: np.ndarray  # grad merit + J' multipliers
    feasibility: np.ndarray  # defect values
    stationarity_norm: float
    feasibility_norm: float
    merit_value: float
    tol_g_effective: float
    tol_c: float
    passed: bool


def check_kkt(problem, v, multipliers, tol_c=1e-8, tol_g=1e-6) -> KktReport:
    """Evaluate the first-order KKT residuals at ``v``.

    ``multipliers`` uses the maximization sign convention, matching
    ``NlpSolution.multipliers``.
    """
    v = _flat(v)
    lam = np.asarray(multipliers, dtype=float)
    merit, grad, c, jac = _bundle(problem, v)
    stat = grad + (jac.T @ lam if lam.size else np.zeros_like(grad))
    stat_norm = _inf_norm(stat)
    feas_norm = _inf_norm(c)
    tol_g_eff = tol_g * (1.0 + abs(merit))
    return KktReport(
        stationarity=stat,
        feasibility=c,
        stationarity_norm=stat_norm,
        feasibility_norm=feas_norm,
        merit_value=merit,
        tol_g_effective=tol_g_eff,
        tol_c=tol_c,
        passed=bool(stat_norm <= tol_g_eff and feas_norm <= tol_c),
    )


def solve(problem, v_init, opts: SolveOptions | None = None) -> NlpSolution:
    """Maximize the problem merit subject to its defect constraints.

    ``problem`` needs ``merit``/``merit_gradient`` plus, when constrained,
    ``defects``/``defect_jacobian`` (a combined ``bundle`` is used when
    available).  ``v_init`` may be flat or a structured decision vector with
    ``pack()``.  Returns the best iterate found together with convergence
    status; see ``SolveOptions`` for tolerances and the penalty schedule.
    """
    opts = opts or SolveOptions()
    v = _flat(v_init).copy()

    counts = IterationCounts()
    trace_rows = []
    history = []

    merit0, grad0, c0, jac0 = _bundle(problem, v)
    counts.n_eval += 1
    if not np.isfinite(merit0):
        raise ValueError("merit is not finite at the initial point")
    n_con = c0.size

    lam_min = (
        -np.asarray(opts.multipliers, dtype=float)
        if opts.multipliers is not None
        else np.zeros(n_con)
    )
    if lam_min.shape != (n_con,):
        raise ValueError("multiplier warm start has the wrong size")
    rho = float(opts.rho_init)

    def fg(point):
        """Augmented-Lagrangian value, gradient and (merit, feas) metadata."""
        merit, grad, c, jac = _bundle(problem, point)
        counts.n_eval += 1
        feas = _inf_norm(c)
        if not np.isfinite(merit):
            return np.inf, np.zeros_like(point), (merit, feas)
        shifted = lam_min + rho * c
        val = -merit + float(c @ lam_min) + 0.5 * rho * float(c @ c)
        g = -grad + (jac.T @ shifted if n_con else 0.0)
        return val, np.asarray(g), (merit, feas)

    # the factor-4 drop test compares successive outer-iteration ends; the
    # first outer iteration has no predecessor, so it always counts as a
    # successful decrease
    feas_prev = np.inf
    best = {"v": v.copy(), "merit": merit0, "feas": _inf_norm(c0), "feasible": False}
    status = STATUS_MAX_ITER
    ls_failed_before = False

    for outer in range(opts.max_outer):
        counts.outer += 1
        v, inner_iters, inner_reason = _lbfgs(fg, v, opts, trace_rows)
        counts.inner += inner_iters

        merit, grad, c, jac = _bundle(problem, v)
        counts.n_eval += 1
        feas = _inf_norm(c)
        tol_g_eff = opts.tol_g * (1.0 + abs(merit))

        # first-order multiplier update (minimization sign), safeguarded
        lam_new = np.clip(lam_min + rho * c, -opts.lambda_max, opts.lambda_max)
        stat = -grad + (jac.T @ lam_new if n_con else 0.0)
        stat_norm = _inf_norm(stat)

        history.append(
            {
                "outer": outer,
                "merit": merit,
                "feasibility": feas,
                "stationarity": stat_norm,
                "rho": rho,
                "inner_iterations": inner_iters,
                "inner_reason": inner_reason,
            }
        )

        if feas <= opts.tol_c:
            if not best["feasible"] or merit > best["merit"]:
                best = {"v": v.copy(), "merit": merit, "feas": feas, "feasible": True}
        elif not best["feasible"] and feas < best["feas"]:
            best = {"v": v.copy(), "merit": merit, "feas": feas, "feasible": False}

        if feas <= opts.tol_c and stat_norm <= tol_g_eff:
            lam_min = lam_new
            status = STATUS_CONVERGED
            break

        if inner_reason == "line-search":
            if ls_failed_before:
                status = STATUS_LINE_SEARCH
                break
            ls_failed_before = True
        else:
            ls_failed_before = False

        # guarded first-order update: accept the new multipliers only when
        # the violation dropped enough, otherwise strengthen the penalty --
        # updating multipliers from a far-from-feasible subproblem solution
        # poisons every later outer iteration
        if feas <= max(opts.tol_c, opts.feas_drop * feas_prev):
            lam_min = lam_new
        elif n_con:
            rho *= opts.rho_growth
        feas_prev = feas

    out_v = v if status == STATUS_CONVERGED else best["v"]
    merit, grad, c, jac = _bundle(problem, out_v)
    multipliers = -lam_min
    stat = grad + (jac.T @ multipliers if n_con else 0.0)

    if opts.trace is not None:
        _write_trace(opts.trace, trace_rows)

    v_opt = problem.unpack(out_v) if hasattr(problem, "unpack") else out_v
    return NlpSolution(
        v_opt=v_opt,
        merit_value=merit,
        constraint_violation=_inf_norm(c),
        iterations=counts,
        status=status,
        multipliers=multipliers,
        stationarity=_inf_norm(stat),
        history=history,
    )


# ---- plumbing ----


def _flat(v):
    if hasattr(v, "pack"):
        return np.asarray(v.pack(), dtype=float)
    return np.asarray(v, dtype=float)


def _inf_norm(a):
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _bundle(problem, v):
    """(merit, gradient, defects, jacobian) with graceful degradation for
    problems exposing only part of the interface (e.g. unconstrained)."""
    if hasattr(problem, "bundle"):
        return problem.bundle(v)
    merit = problem.merit(v)
    grad = np.asarray(problem.merit_gradient(v), dtype=float)
    if hasattr(problem, "defects"):
        c = np.asarray(problem.defects(v), dtype=float)
        jac = problem.defect_jacobian(v)
    else:
        c = np.zeros(0)
        jac = None
    return merit, grad, c, jac


def _write_trace(target, rows):
    header = ["iter", "merit", "feasibility", "grad_norm", "step"]
    if hasattr(target, "write"):
        w = csv.writer(target)
        w.writerow(header)
        w.writerows(rows)
    else:
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)


# ---- inner minimizer ----


def _lbfgs(fg, v0, opts, trace_rows):
    """Limited-memory BFGS with a strong-Wolfe line search.

    Stops at gradient norm max(0.1 * tol_g * (1 + |merit|), 0.1 * feas) of
    the current iterate.  Returns ``(v, iterations, reason)`` with reason in
    {"gtol", "max-iter", "line-search"}.
    """
    v = v0
    f, g, (merit, feas) = fg(v)
    if not np.isfinite(f):
        return v, 0, "line-search"
    s_list, y_list, rho_list = [], [], []

    for it in range(opts.max_inner):
        gnorm = _inf_norm(g)
        gtol = max(0.1 * opts.tol_g * (1.0 + abs(merit)), 0.1 * feas)
        if gnorm <= gtol:
            return v, it, "gtol"

        p = _two_loop(g, s_list, y_list, rho_list)
        if not np.isfinite(p).all() or p @ g >= 0.0:
            # fall back to steepest descent and drop stale curvature
            s_list, y_list, rho_list = [], [], []
            p = -g

        alpha0 = 1.0 if s_list else min(1.0, 1.0 / max(gnorm, 1e-12))
        step = _wolfe(fg, v, f, g, p, alpha0, opts.wolfe_c1, opts.wolfe_c2, opts.max_ls)
        if step is None and s_list:
            # retry once from a clean steepest-descent direction before
            # giving up; stale curvature pairs can poison the direction
            s_list, y_list, rho_list = [], [], []
            p = -g
            step = _wolfe(
                fg, v, f, g, p, min(1.0, 1.0 / max(gnorm, 1e-12)),
                opts.wolfe_c1, opts.wolfe_c2, opts.max_ls,
            )
        if step is None:
            return v, it, "line-search"
        alpha, f_new, g_new, v_new, (merit, feas) = step

        s = v_new - v
        y = g_new - g
        sy = float(s @ y)
        if np.isfinite(sy) and sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > opts.memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)
        v, f, g = v_new, f_new, g_new
        trace_rows.append((len(trace_rows), merit, feas, _inf_norm(g), alpha))

    return v, opts.max_inner, "max-iter"


def _two_loop(g, s_list, y_list, rho_list):
    q = -g.copy()
    if not s_list:
        return q
    alphas = []
    for s, y, r in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = r * (s @ q)
        alphas.append(a)
        q -= a * y
    y_last = y_list[-1]
    gamma = 1.0 / (rho_list[-1] * (y_last @ y_last))
    q *= gamma
    for (s, y, r), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = r * (y @ q)
        q += (a - b) * s
    return q


def _wolfe(fg, v, f0, g0, p, alpha0, c1, c2, max_ls):
    """Strong-Wolfe line search (bracket, then zoom).

    Non-finite trial values are treated as "too far" and bracketed away.
    When function-value differences fall below the rounding floor the
    search falls back to gradient-only (approximate Wolfe) acceptance:
    near an optimum the analytic slope stays accurate long after f-value
    comparisons have drowned in noise.  Returns ``(alpha, f, g, v_new,
    aux)`` or None on failure.
    """
    d0 = float(g0 @ p)
    if d0 >= 0.0 or not np.isfinite(d0):
        return None
    eps_f = 1e-12 * (1.0 + abs(f0))

    def phi(a):
        vn = v + a * p
        fv, gv, aux = fg(vn)
        dv = float(gv @ p) if np.isfinite(fv) else np.nan
        return fv, dv, gv, vn, aux

    def approx_ok(fa, da):
        return (
            np.isfinite(fa)
            and abs(fa - f0) <= eps_f
            and c2 * d0 <= da <= (2.0 * c1 - 1.0) * d0
        )

    a_prev, f_prev, d_prev = 0.0, f0, d0
    lo_state = None  # (g, v, aux) at a_prev when a_prev > 0
    evals = 0
    a = float(alpha0)
    while evals < max_ls:
        fa, da, ga, va, aux = phi(a)
        evals += 1
        if approx_ok(fa, da):
            return a, fa, ga, va, aux
        if not np.isfinite(fa) or fa > f0 + c1 * a * d0 or (evals > 1 and fa >= f_prev):
            return _zoom(
                phi, a_prev, f_prev, d_prev, lo_state, a, f0, d0, c1, c2,
                max_ls - evals, approx_ok,
            )
        if abs(da) <= -c2 * d0:
            return a, fa, ga, va, aux
        if da >= 0.0:
            return _zoom(
                phi, a, fa, da, (ga, va, aux), a_prev, f0, d0, c1, c2,
                max_ls - evals, approx_ok,
            )
        a_prev, f_prev, d_prev = a, fa, da
        lo_state = (ga, va, aux)
        a = min(2.0 * a, 1e12)
    return None


def _zoom(phi, a_lo, f_lo, d_lo, lo_state, a_hi, f0, d0, c1, c2, budget, approx_ok):
    """Shrink a bracketing interval until the strong-Wolfe conditions hold.

    ``a_lo`` satisfies sufficient decrease with the lowest value seen so far
    (``lo_state`` carries its gradient when it came from a real evaluation).
    ``a_hi`` only bounds the interval; its value may be worse or non-finite.
    """
    f_hi = np.inf  # value at a_hi is only used for interpolation safeguards
    for _ in range(max(budget, 1)):
        width = abs(a_hi - a_lo)
        if width <= 1e-14 * max(1.0, abs(a_lo)):
            break
        # safeguarded quadratic interpolation from (f_lo, d_lo) toward a_hi
        if np.isfinite(f_hi):
            denom = 2.0 * (f_hi - f_lo - d_lo * (a_hi - a_lo))
            a = a_lo - d_lo * (a_hi - a_lo) ** 2 / denom if denom != 0.0 else np.nan
        else:
            a = np.nan
        if not np.isfinite(a):
            a = 0.5 * (a_lo + a_hi)
        else:
            lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
            margin = 0.1 * width
            a = min(max(a, lo + margin), hi - margin)

        fa, da, ga, va, aux = phi(a)
        if approx_ok(fa, da):
            return a, fa, ga, va, aux
        if not np.isfinite(fa) or fa > f0 + c1 * a * d0 or fa >= f_lo:
            a_hi, f_hi = a, fa
        else:
            if abs(da) <= -c2 * d0:
                return a, fa, ga, va, aux
            if da * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi = a_lo, f_lo
            a_lo, f_lo, d_lo = a, fa, da
            lo_state = (ga, va, aux)
    if lo_state is not None and a_lo > 0.0:
        # sufficient decrease held but curvature never did: accept the point;
        # the caller's curvature guard decides whether to keep the BFGS pair
        g_lo, v_lo, aux = lo_state
        return a_lo, f_lo, g_lo, v_lo, aux
    return None

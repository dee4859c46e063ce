"""Small dense convex QP solver.

    minimize    1/2 z'Hz + f'z
    subject to  G z <= h,  A z = b

Primal-dual interior point with Mehrotra predictor-corrector steps.  When
the iteration stalls, a phase-1 LP decides feasibility and, if the
constraints are inconsistent, returns a Farkas certificate
(y >= 0, G'y + A'nu = 0, h'y + b'nu < 0).
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np


class QPStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


class QPNumericalError(RuntimeError):
    pass


@dataclass
class QPResult:
    status: QPStatus
    x: Optional[np.ndarray]
    y: Optional[np.ndarray] = None  # inequality multipliers
    nu: Optional[np.ndarray] = None  # equality multipliers
    objective: float = np.nan
    iterations: int = 0
    residuals: Optional[dict] = None
    certificate: Optional[np.ndarray] = None


def _empty(n):
    return np.zeros((0, n)), np.zeros(0)


def kkt_residuals(H, f, G, h, A, b, x, y, nu) -> dict:
    """Max-norm KKT residuals of a candidate primal-dual point."""
    n = len(f)
    G, h = (G, h) if G is not None else _empty(n)
    A, b = (A, b) if A is not None else _empty(n)
    stat = H @ x + f + G.T @ y + A.T @ nu
    slack = h - G @ x
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "primal_ineq": float(np.maximum(-slack, 0.0).max(initial=0.0)),
        "primal_eq": float(np.abs(A @ x - b).max(initial=0.0)),
        "dual_feas": float(np.maximum(-y, 0.0).max(initial=0.0)),
        "complementarity": float(np.abs(y * slack).max(initial=0.0)),
    }


def _ipm(H, f, G, h, A, b, tol, max_iter, stall_window=15, mu_tol=None, x0=None):
    n, m, p = len(f), len(h), len(b)
    mu_tol = tol if mu_tol is None else mu_tol
    nu = np.zeros(p)
    if x0 is not None:
        x = np.array(x0, dtype=float)
    else:
        # least-squares start: min 1/2 x'Hx + f'x + 1/2 |Gx - h|^2 subject to Ax = b
        K0 = H + G.T @ G
        K0[np.diag_indices(n)] += 1e-8
        rhs = -f + G.T @ h
        if p:
            K0 = np.block([[K0, A.T], [A, np.zeros((p, p))]])
            rhs = np.concatenate([rhs, b])
        try:
            x = np.linalg.solve(K0, rhs)[:n]
        except np.linalg.LinAlgError:
            x = np.linalg.lstsq(K0, rhs, rcond=None)[0][:n]
    r = h - G @ x
    s, y = r.copy(), -r
    if m:
        lo = -s.min()
        if lo >= -1e-8:
            s += 1.0 + lo
        lo = -y.min()
        if lo >= -1e-8:
            y += 1.0 + lo
    scale_p = 1.0 + np.abs(h).max(initial=0.0)
    absG, absA = np.abs(G).T, np.abs(A).T
    history = []
    best, best_merit = (x, y, nu), np.inf
    for it in range(1, max_iter + 1):
        r_d = H @ x + f + G.T @ y + A.T @ nu
        r_p = G @ x + s - h
        r_e = A @ x - b
        mu = float(s @ y) / m if m else 0.0
        res_p = max(np.abs(r_p).max(initial=0.0), np.abs(r_e).max(initial=0.0))
        res_d = np.abs(r_d).max(initial=0.0)
        # dual residual relative to the size of the terms that cancel in it
        scale_d = 1.0 + max(np.abs(f).max(initial=0.0), np.abs(H @ x).max(initial=0.0),
                            (absG @ y).max(initial=0.0), (absA @ np.abs(nu)).max(initial=0.0))
        merit = max(res_d / scale_d, res_p / scale_p, mu)
        if merit < best_merit:
            best, best_merit = (x, y, nu), merit
        if res_d <= tol * scale_d and res_p <= tol * scale_p and mu <= mu_tol:
            return x, y, nu, it, True
        history.append(res_p / scale_p + mu)
        if len(history) > stall_window and history[-1] > 0.9 * history[-1 - stall_window] \
                and res_p > 1e3 * tol * scale_p:
            return (*best, it, False)

        w = y / s
        K = H + (G.T * w) @ G
        K[np.diag_indices(n)] += 1e-13
        if p:
            KKT = np.block([[K, A.T], [A, np.zeros((p, p))]])
        else:
            KKT = K

        def solve(r_c):
            rhs_x = -r_d - G.T @ ((y * r_p - r_c) / s)
            rhs = np.concatenate([rhs_x, -r_e]) if p else rhs_x
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            dx = sol[:n]
            dnu = sol[n:] if p else np.zeros(0)
            ds = -r_p - G @ dx
            dy = (-r_c - y * ds) / s
            return dx, ds, dy, dnu

        # predictor
        dx, ds, dy, dnu = solve(s * y)
        a_aff = _max_step(s, ds, y, dy)
        mu_aff = float((s + a_aff * ds) @ (y + a_aff * dy)) / m if m else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, ds, dy, dnu = solve(s * y + ds * dy - sigma * mu)
        alpha = min(1.0, 0.99 * _max_step(s, ds, y, dy))
        x = x + alpha * dx
        s = s + alpha * ds
        y = y + alpha * dy
        nu = nu + alpha * dnu
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(s > 0)):
            return (*best, it, False)
    return (*best, max_iter, False)


def _max_step(s, ds, y, dy) -> float:
    a = 1.0
    neg = ds < 0
    if np.any(neg):
        a = min(a, float(np.min(-s[neg] / ds[neg])))
    neg = dy < 0
    if np.any(neg):
        a = min(a, float(np.min(-y[neg] / dy[neg])))
    return a


def _polish(H, f, G, h, A, b, x, y, nu, amb_tol=1e-3, max_amb=4):
    """Re-solve the KKT system on a guessed active set; keep it if consistent.

    Rows where both the slack and the multiplier are small are ambiguous;
    every subset of them is tried.  With H positive definite, any candidate
    that satisfies the KKT conditions is the unique optimum.
    """
    slack = h - G @ x
    sure = y > slack
    amb = np.flatnonzero((np.abs(slack) < amb_tol) & (y < amb_tol))
    if len(amb) > max_amb:
        amb = amb[:0]
    base = sure.copy()
    base[amb] = False
    for r in range(len(amb) + 1):
        for extra in itertools.combinations(amb, r):
            act = base.copy()
            act[list(extra)] = True
            cand = _kkt_on(H, f, G, h, A, b, np.flatnonzero(act))
            if cand is not None:
                return cand
    return x, y, nu


def _kkt_on(H, f, G, h, A, b, act):
    n = len(f)
    Ga = np.vstack([A, G[act]])
    k = len(Ga)
    if k > n:
        return None
    KKT = np.block([[H, Ga.T], [Ga, np.zeros((k, k))]])
    rhs = np.concatenate([-f, b, h[act]])
    try:
        sol = np.linalg.solve(KKT, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    lam = sol[n + len(b):]
    scale = 1.0 + np.abs(h).max(initial=0.0)
    if np.any(G @ xp - h > 1e-10 * scale):
        return None
    if np.any(lam < -1e-10 * (1.0 + np.abs(lam).max(initial=0.0))):
        return None
    yp = np.zeros(len(h))
    yp[act] = np.maximum(lam, 0.0)
    return xp, yp, sol[n:n + len(b)]


def _kkt_ok(H, f, G, h, A, b, x, y, nu, tol) -> bool:
    r = kkt_residuals(H, f, G, h, A, b, x, y, nu)
    scale = 1.0 + max(np.abs(f).max(initial=0.0), np.abs(h).max(initial=0.0),
                      np.abs(b).max(initial=0.0))
    return all(np.isfinite(v) and v <= 1e3 * tol * scale for v in r.values())


def phase1(G, h, A=None, b=None, tol: float = 1e-9):
    """Minimize the uniform violation t of G z - t <= h, floored at t >= -1.

    Returns (t*, z, y) where y are the multipliers of the G rows.
    """
    m, n = G.shape
    A, b = (A, b) if A is not None else _empty(n)
    G1 = np.zeros((m + 1, n + 1))
    G1[:m, :n] = G
    G1[:m, n] = -1.0
    G1[m, n] = -1.0
    h1 = np.concatenate([h, [1.0]])
    A1 = np.hstack([A, np.zeros((len(b), 1))])
    f1 = np.zeros(n + 1)
    f1[n] = 1.0
    H1 = np.zeros((n + 1, n + 1))
    z, y, nu, _, ok = _ipm(H1, f1, G1, h1, A1, b, tol, 200, stall_window=10**9)
    return float(z[n]), z[:n], y[:m], nu, ok


def solve_qp(H, f, G=None, h=None, A=None, b=None, tol: float = 1e-9,
             max_iter: int = 60, feas_tol: float = 1e-7) -> QPResult:
    # near the boundary y/s can overflow; such iterates are rejected anyway
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve_qp(H, f, G, h, A, b, tol, max_iter, feas_tol)


def _solve_qp(H, f, G, h, A, b, tol, max_iter, feas_tol) -> QPResult:
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    n = len(f)
    G, h = (np.asarray(G, float).reshape(-1, n), np.asarray(h, float).reshape(-1)) \
        if G is not None else _empty(n)
    A, b = (np.asarray(A, float).reshape(-1, n), np.asarray(b, float).reshape(-1)) \
        if A is not None else _empty(n)
    H = 0.5 * (H + H.T)

    x, y, nu, it, ok = _ipm(H, f, G, h, A, b, tol, max_iter)
    if ok:
        x, y, nu = _polish(H, f, G, h, A, b, x, y, nu)
        res = kkt_residuals(H, f, G, h, A, b, x, y, nu)
        return QPResult(QPStatus.OPTIMAL, x, y, nu, float(0.5 * x @ H @ x + f @ x), it, res)
    # a stalled iterate is often exact up to round-off once its active set is identified
    polished = _polish(H, f, G, h, A, b, x, y, nu)
    if _kkt_ok(H, f, G, h, A, b, *polished, tol):
        x, y, nu = polished
        res = kkt_residuals(H, f, G, h, A, b, x, y, nu)
        return QPResult(QPStatus.OPTIMAL, x, y, nu, float(0.5 * x @ H @ x + f @ x), it, res)

    if len(h) or len(b):
        t, z, y1, nu1, ok1 = phase1(G, h, A, b)
        if ok1 and t > feas_tol:
            return QPResult(QPStatus.INFEASIBLE, None, iterations=it, certificate=y1)
        if ok1:
            # feasible but the main iteration stalled: restart from the phase-1 point
            x, y, nu, it2, ok = _ipm(H, f, G, h, A, b, tol, 4 * max_iter,
                                     stall_window=10**9, x0=z)
            cand = _polish(H, f, G, h, A, b, x, y, nu)
            if ok or _kkt_ok(H, f, G, h, A, b, *cand, tol):
                x, y, nu = cand
                res = kkt_residuals(H, f, G, h, A, b, x, y, nu)
                return QPResult(QPStatus.OPTIMAL, x, y, nu,
                                float(0.5 * x @ H @ x + f @ x), it + it2, res)
    cond = np.linalg.cond(H + G.T @ G) if n else 0.0
    raise QPNumericalError(f"interior point did not converge (cond(H+G'G)={cond:.3e})")

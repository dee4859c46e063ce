"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from ecodrive.energy import DEFAULT_MODEL, stage_cost
from ecodrive.learning import Dataset


def grid_dataset(s_range=(0.0, 200.0), ds=1.0, v_range=(0.0, 14.0), dv=0.5,
                 u_values=np.arange(-3.0, 2.0 + 1e-9, 0.5), v_max=14.0) -> Dataset:
    """Every grid (s, v) paired with every grid input that keeps v in [0, v_max]."""
    s = np.arange(s_range[0], s_range[1] + 1e-9, ds)
    v = np.arange(v_range[0], v_range[1] + 1e-9, dv)
    S, V, U = np.meshgrid(s, v, np.asarray(u_values, dtype=float), indexing="ij")
    S, V, U = S.ravel(), V.ravel(), U.ravel()
    ok = (V + U >= -1e-12) & (V + U <= v_max + 1e-12)
    return Dataset(np.column_stack([S[ok], V[ok]]), U[ok], np.zeros(ok.sum(), dtype=int))


def reach_thresholds(t_max: int, v_grid: np.ndarray, u_values: np.ndarray, s_tl: float,
                     margin: float) -> np.ndarray:
    """Exact backward recursion for the after-light robust controllable sets.

    With a target {s >= s_tl} every set is upward closed in s, so C_t is
    {(s, v): s >= thr[t, v]} on the speed grid.  thr[t, v] is the smallest
    start position from which some input sequence on the grid reaches the
    eroded target, the erosion by ``margin`` applied at every stage.
    """
    dv = v_grid[1] - v_grid[0]
    thr = np.full((t_max + 1, len(v_grid)), np.inf)
    thr[0] = s_tl
    for t in range(1, t_max + 1):
        for j, v in enumerate(v_grid):
            best = np.inf
            for u in u_values:
                vn = v + u
                jn = int(round((vn - v_grid[0]) / dv))
                if jn < 0 or jn >= len(v_grid) or abs(v_grid[jn] - vn) > 1e-9:
                    continue
                # successor s + v + u/2 must satisfy s' - margin >= thr[t-1]
                best = min(best, thr[t - 1, jn] + margin - v - 0.5 * u)
            thr[t, j] = best
    return thr


def grid_value_dp(s_tl: float, s_lo: float, ds: float, v_grid: np.ndarray, u_values: np.ndarray,
                  model=DEFAULT_MODEL, iters: int = 2000, tol: float = 1e-10,
                  noise=(0.0,)) -> tuple:
    """Optimal energy-to-go to {s >= s_tl} by value iteration on an (s, v) grid.

    Position is interpolated linearly between grid nodes; speed successors
    land on the grid exactly.  The successor value is averaged over the
    position offsets in ``noise``.  Returns (s_grid, v_grid, V).
    """
    noise = np.asarray(noise, dtype=float)
    s_grid = np.arange(s_lo, s_tl + 1e-9, ds)
    dv = v_grid[1] - v_grid[0]
    Vg = np.zeros((len(s_grid), len(v_grid)))
    SS, VV = np.meshgrid(s_grid, v_grid, indexing="ij")
    cand = []
    for u in u_values:
        vn = VV + u
        jn = np.rint((vn - v_grid[0]) / dv).astype(int)
        ok = (jn >= 0) & (jn < len(v_grid)) & (np.abs(vn - v_grid[np.clip(jn, 0, len(v_grid) - 1)]) < 1e-9)
        sn = SS + VV + 0.5 * u
        cand.append((u, ok, np.clip(jn, 0, len(v_grid) - 1), sn))
    Vg[:] = np.inf
    for _ in range(iters):
        new = np.full_like(Vg, np.inf)
        for u, ok, jn, sn0 in cand:
            val = np.zeros_like(Vg)
            for n in noise:
                sn = sn0 + n
                # interpolate along s at the successor speed column
                pos = np.clip((sn - s_lo) / ds, 0, len(s_grid) - 1)
                i0 = np.floor(pos).astype(int)
                i1 = np.minimum(i0 + 1, len(s_grid) - 1)
                w = pos - i0
                a, b = Vg[i0, jn], Vg[i1, jn]
                with np.errstate(invalid="ignore"):
                    vn = np.where(w > 0, (1 - w) * a + w * b, a)
                vn = np.where(sn >= s_tl, 0.0, vn)
                vn = np.where(sn < s_lo, np.inf, vn)
                val = val + vn
            c = stage_cost(model, VV, u) + val / len(noise)
            new = np.where(ok, np.minimum(new, c), new)
        fin = np.isfinite(new) & np.isfinite(Vg)
        if np.array_equal(np.isfinite(new), np.isfinite(Vg)) and \
                (not fin.any() or np.abs(new[fin] - Vg[fin]).max() <= tol):
            return s_grid, v_grid, new
        Vg = new
    return s_grid, v_grid, Vg


def lp_envelope(points: np.ndarray, J: np.ndarray, x) -> float:
    """min J.lam s.t. sum lam x_d = x, lam in the simplex (inf if infeasible)."""
    n = len(points)
    A = np.vstack([points.T, np.ones(n)])
    res = linprog(J, A_eq=A, b_eq=[x[0], x[1], 1.0], bounds=(0, None), method="highs")
    return float(res.fun) if res.status == 0 else np.inf


def lp_value_iteration(D: Dataset, s_tl: float, model=DEFAULT_MODEL, tol: float = 1e-9,
                       k_max: int = 300) -> np.ndarray:
    """Noise-free data-driven cost-to-go with every envelope value from an LP."""
    succ = D.successors()
    ell = stage_cost(model, D.states[:, 1], D.inputs)
    J = np.full(len(D), np.inf)
    for _ in range(k_max):
        fin = np.isfinite(J)
        new = np.full(len(D), np.inf)
        for j, x in enumerate(succ):
            if x[0] >= s_tl:
                new[j] = ell[j]
            elif fin.any():
                new[j] = ell[j] + lp_envelope(D.states[fin], J[fin], x)
        same = np.array_equal(np.isfinite(new), fin)
        if same and np.abs(new[fin] - J[fin]).max(initial=0.0) <= tol:
            return new
        J = new
    raise RuntimeError("LP value iteration did not converge")


def brute_force_hull(points: np.ndarray) -> np.ndarray:
    """Points not inside any triangle of the other points (O(n^4), vectorized per point)."""
    pts = np.asarray(points, dtype=float)
    tri = np.array(list(itertools.combinations(range(len(pts)), 3)))
    A, B, C = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]

    def cross(o, a, q):
        return (a[:, 0] - o[:, 0]) * (q[..., 1] - o[:, 1]) - (a[:, 1] - o[:, 1]) * (q[..., 0] - o[:, 0])

    area = np.abs(cross(A, B, C))
    keep = []
    for i, p in enumerate(pts):
        use = (area > 1e-12) & np.all(tri != i, axis=1)
        d1, d2, d3 = cross(A, B, p), cross(B, C, p), cross(C, A, p)
        inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))
        if not np.any(inside & use):
            keep.append(p)
    return np.array(keep)


def point_in_polygon(poly: np.ndarray, p) -> bool:
    """Winding-number test against a closed CCW polygon (boundary counts)."""
    wn = 0
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        cr = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])
        if abs(cr) <= 1e-12 and min(a[0], b[0]) - 1e-12 <= p[0] <= max(a[0], b[0]) + 1e-12 \
                and min(a[1], b[1]) - 1e-12 <= p[1] <= max(a[1], b[1]) + 1e-12:
            return True
        if a[1] <= p[1]:
            if b[1] > p[1] and cr > 0:
                wn += 1
        elif b[1] <= p[1] and cr < 0:
            wn -= 1
    return wn != 0


def qp_active_set_oracle(H, f, G, h, tol: float = 1e-9):
    """Exhaustive active-set enumeration; returns the minimizer or None if infeasible."""
    n, m = len(f), len(h)
    best, best_val = None, np.inf
    for k in range(0, min(m, n) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            Ga = G[S]
            K = np.block([[H, Ga.T], [Ga, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-f, h[S]]))
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.all(G @ x <= h + tol) and np.all(lam >= -tol):
                val = 0.5 * x @ H @ x + f @ x
                if val < best_val:
                    best, best_val = x, val
    return best

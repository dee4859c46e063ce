"""Data set lifecycle, data-driven robust controllable sets and cost-to-go.

States are stored relative to the light they approach (the light sits at
s = 0), so one data set serves every segment of a route.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .energy import DEFAULT_MODEL, EnergyModel, stage_cost
from .geometry import (ConvexRegion2, SInterval, after_light, before_light, convex_hull,
                       empty_region, erode_s)
from .plant import (DEFAULT_LIMITS, DEFAULT_SYS, Limits, NoiseModel, SystemMatrices,
                    sample_lumped_noise)

DEFAULT_W = SInterval(-3.0, 3.0)


def robust_margin(L: float, W: SInterval = DEFAULT_W) -> float:
    """Half-width of 2L*W, the per-step erosion used by both algorithms."""
    return 2.0 * L * W.radius


class InfeasiblePairError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    """Raised by cost_to_go; ``J`` and ``delta`` hold the last two sweeps."""

    def __init__(self, msg: str, J: Optional[np.ndarray] = None, delta: Optional[np.ndarray] = None):
        super().__init__(msg)
        self.J = J
        self.delta = delta


# ---------------------------------------------------------------------------
# data set


@dataclass(frozen=True, eq=False)
class Dataset:
    states: np.ndarray
    inputs: np.ndarray
    iteration: np.ndarray
    scenario: tuple = ()

    def __post_init__(self):
        st = np.asarray(self.states, dtype=float).reshape(-1, 2)
        u = np.asarray(self.inputs, dtype=float).reshape(-1)
        it = np.asarray(self.iteration, dtype=int).reshape(-1)
        sc = tuple(str(x) for x in self.scenario) or ("",) * len(u)
        if not (len(st) == len(u) == len(it) == len(sc)):
            raise ValueError("dataset columns must have equal length")
        for a in (st, u, it):
            a.setflags(write=False)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "iteration", it)
        object.__setattr__(self, "scenario", sc)

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int), ())

    def __len__(self) -> int:
        return len(self.inputs)

    def successors(self, sys: SystemMatrices = DEFAULT_SYS) -> np.ndarray:
        return sys.successors(self.states, self.inputs)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "v", "u", "iter", "scenario"])
            for (s, v), u, it, sc in zip(self.states, self.inputs, self.iteration, self.scenario):
                w.writerow([repr(float(s)), repr(float(v)), repr(float(u)), int(it), sc])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["s", "v", "u", "iter", "scenario"]:
                raise ValueError(f"expected header s,v,u,iter,scenario in {path}")
            rows = list(reader)
        if not rows:
            return cls.empty()
        st = np.array([[float(r["s"]), float(r["v"])] for r in rows])
        return cls(st, [float(r["u"]) for r in rows], [int(r["iter"]) for r in rows],
                   tuple(r["scenario"] for r in rows))


def _keys(states: np.ndarray, inputs: np.ndarray, tol: float) -> list:
    arr = np.column_stack([states, inputs])
    return [tuple(r) for r in np.round(arr / tol).astype(np.int64)]


def augment(D: Dataset, pairs, iteration: int = 0, scenario: str = "",
            limits: Limits = DEFAULT_LIMITS, tol: float = 1e-9) -> Dataset:
    """Append feasible (state, input) pairs; near-duplicates are dropped.

    ``pairs`` is an (n, 3) array-like of rows (s, v, u).
    """
    arr = np.asarray(pairs, dtype=float).reshape(-1, 3)
    if len(arr) == 0:
        return D
    if not np.all(np.isfinite(arr)):
        raise InfeasiblePairError("non-finite pair")
    ok = limits.feasible(arr[:, 1], arr[:, 2])
    if not np.all(ok):
        bad = arr[np.flatnonzero(~ok)[0]]
        raise InfeasiblePairError(
            f"infeasible pair rejected: s={bad[0]:.3f}, v={bad[1]:.3f}, u={bad[2]:.3f} "
            f"outside v in [0, {limits.v_max}], u in [{limits.a_min}, {limits.a_max}]")
    seen = set(_keys(D.states, D.inputs, tol))
    keep = []
    for i, key in enumerate(_keys(arr[:, :2], arr[:, 2], tol)):
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if not keep:
        return D
    new = arr[keep]
    return Dataset(np.vstack([D.states, new[:, :2]]), np.concatenate([D.inputs, new[:, 2]]),
                   np.concatenate([D.iteration, np.full(len(new), iteration)]),
                   D.scenario + (scenario,) * len(new))


def init_dataset(routes: Sequence, speeds: Sequence[float], runs: int,
                 rng: np.random.Generator, limits: Limits = DEFAULT_LIMITS,
                 tail: float = 300.0, **sim_kwargs) -> Dataset:
    """Closed-loop cruise runs on every (route, schedule) pair at every speed.

    ``runs`` repetitions per speed, each with its own noise stream and a
    start position drawn from [-v, 0] so that runs sample different phases.
    """
    from .sim import collect_cruise_pairs  # sim depends on this module

    for v in speeds:
        if not 0.0 <= v <= limits.v_max:
            raise ValueError(f"cruise speed {v} outside [0, {limits.v_max}]")
    D = Dataset.empty()
    for ri, (route, schedule) in enumerate(routes):
        for v in speeds:
            for _ in range(runs):
                seed = int(rng.integers(2**63 - 1))
                s0 = -float(rng.uniform(0.0, max(v, 1.0)))
                pairs = collect_cruise_pairs(route, schedule, v, seed, tail=tail, s0=s0,
                                             **sim_kwargs)
                D = augment(D, pairs, iteration=0, scenario=f"init:{ri}:{v:g}", limits=limits)
    return D


# ---------------------------------------------------------------------------
# Algorithm 1


@dataclass(frozen=True)
class ControllableSet:
    t: int
    region: ConvexRegion2
    kind: str = "custom"  # "before-light", "after-light" or "custom"
    s_tl: Optional[float] = None

    def to_json(self) -> dict:
        return {"t": self.t, "target": {"kind": self.kind, "s_tl": self.s_tl},
                "region": self.region.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "ControllableSet":
        tgt = obj.get("target", {})
        return cls(int(obj["t"]), ConvexRegion2.from_json(obj["region"]),
                   tgt.get("kind", "custom"), tgt.get("s_tl"))


class RobustSetSequence:
    """Stages R_0..R_t of the data-driven recursion, extended on demand.

    R_0 is the target; R_i is the hull of data states whose successor lies in
    R_{i-1} eroded by 2L*W along s.  Once a stage is empty every later one is.
    """

    def __init__(self, D: Dataset, target: ConvexRegion2, sys: SystemMatrices = DEFAULT_SYS,
                 L: float = 0.05, W: SInterval = DEFAULT_W, kind: str = "custom",
                 s_tl: Optional[float] = None):
        self.D = D
        self.states = D.states
        self.succ = D.successors(sys)
        self.margin = robust_margin(L, W)
        self.kind = kind
        self.s_tl = s_tl
        self.regions = [target]
        self.masks: list = [None]
        self._tri: dict = {}

    def region(self, t: int) -> ConvexRegion2:
        if t < 0:
            raise ValueError("t must be nonnegative")
        while len(self.regions) <= t:
            prev = self.regions[-1]
            if prev.empty or len(self.states) == 0:
                self.regions.append(empty_region())
                self.masks.append(np.zeros(len(self.states), dtype=bool))
                continue
            ok = erode_s(prev, self.margin).contains_many(self.succ)
            self.masks.append(ok)
            self.regions.append(convex_hull(self.states[ok]) if ok.any() else empty_region())
        return self.regions[t]

    def __getitem__(self, t: int) -> ConvexRegion2:
        return self.region(t)

    def controllable_set(self, t: int) -> ControllableSet:
        return ControllableSet(t, self.region(t), self.kind, self.s_tl)

    def qualifying(self, t: int) -> np.ndarray:
        """Indices of the data pairs whose states span R_t (t >= 1)."""
        self.region(t)
        return np.flatnonzero(self.masks[t])

    def convex_weights(self, t: int, x) -> Optional[tuple]:
        """Convex weights over qualifying pairs reproducing x, or None."""
        idx = self.qualifying(t)
        if len(idx) == 0:
            return None
        x = np.asarray(x, dtype=float)
        tri = self._tri.get(t)
        if tri is None and t not in self._tri:
            try:
                tri = Delaunay(self.states[idx])
            except (QhullError, ValueError):
                tri = None
            self._tri[t] = tri
        if tri is not None:
            k = int(tri.find_simplex(x[None, :])[0])
            if k >= 0:
                verts = tri.simplices[k]
                T = tri.transform[k]
                b = T[:2] @ (x - T[2])
                lam = np.append(b, 1.0 - b.sum())
                lam = np.clip(lam, 0.0, None)
                lam /= lam.sum()
                return idx[verts], lam
        return _lp_weights(self.states[idx], x, idx)


def _lp_weights(pts: np.ndarray, x: np.ndarray, idx: np.ndarray):
    n = len(pts)
    A = np.vstack([pts.T, np.ones(n)])
    b = np.array([x[0], x[1], 1.0])
    res = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    nz = res.x > 1e-12
    return idx[nz], res.x[nz] / res.x[nz].sum()


def robust_controllable_set(D: Dataset, t: int, target: ConvexRegion2,
                            sys: SystemMatrices = DEFAULT_SYS, L: float = 0.05,
                            W: SInterval = DEFAULT_W, kind: str = "custom",
                            s_tl: Optional[float] = None) -> ControllableSet:
    return RobustSetSequence(D, target, sys, L, W, kind, s_tl).controllable_set(t)


def target_region(kind: str, s_tl: float) -> ConvexRegion2:
    if kind == "before-light":
        return before_light(s_tl)
    if kind == "after-light":
        return after_light(s_tl)
    raise ValueError(f"unknown target kind {kind!r}")


@dataclass
class VerifyReport:
    checked: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.checked == self.passed


def _sample_in_region(region: ConvexRegion2, count: int, rng: np.random.Generator) -> np.ndarray:
    V = region.vertices
    w = rng.dirichlet(np.full(len(V), 0.5), size=count)
    return w @ V


def verify_controllable(seq: RobustSetSequence, t: int, samples: int,
                        rng: np.random.Generator, sys: SystemMatrices = DEFAULT_SYS,
                        tol: float = 1e-7, points=None) -> VerifyReport:
    """Constructive check that sampled points of R_t reach R_0 robustly.

    At each level the point is written as a convex combination of the data
    states that define R_i; the matching combination of their inputs is
    applied and the nominal successor must lie in R_{i-1} eroded by 2L*W.
    Both noise extremes are checked for membership and the chain continues
    from a random admissible noise realization down to the target.
    """
    region = seq.region(t)
    rep = VerifyReport()
    if t == 0 or region.empty:
        return rep
    if points is None:
        pts = np.vstack([region.vertices, _sample_in_region(region, samples, rng)])[:samples]
    else:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(region.contains_many(pts, tol)):
        raise ValueError("verifier only certifies points inside R_t")
    m = seq.margin
    for x0 in pts:
        rep.checked += 1
        x = np.array(x0, dtype=float)
        failure = None
        for level in range(t, 0, -1):
            wts = seq.convex_weights(level, x)
            if wts is None:
                failure = (x0.tolist(), level, "no convex weights")
                break
            idx, lam = wts
            u = float(lam @ seq.D.inputs[idx])
            nxt = sys.successors(x[None, :], [u])[0]
            prev = seq.region(level - 1)
            ends = np.array([nxt + [-m, 0.0], nxt + [m, 0.0]])
            if not np.all(prev.contains_many(ends, tol)):
                failure = (x0.tolist(), level, f"successor {nxt.tolist()} leaves R_{level - 1}")
                break
            x = nxt + [rng.uniform(-m, m), 0.0]
        if failure is None:
            rep.passed += 1
        else:
            rep.failures.append(failure)
    return rep


# ---------------------------------------------------------------------------
# value function: lower convex envelope of (state, J)


class _TriangleIndex:
    """Uniform-grid bucketing of 2-D triangles for point location."""

    def __init__(self, tris: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        self.lo = lo
        self.span = np.maximum(hi - lo, 1e-12)
        n = len(tris)
        self.G = int(min(256, max(4, 2 * math.ceil(math.sqrt(n)))))
        G = self.G
        u = (tris - lo) / self.span * G
        c0 = np.clip(np.floor(u.min(axis=1)).astype(int), 0, G - 1)
        c1 = np.clip(np.floor(u.max(axis=1)).astype(int), 0, G - 1)
        buckets: list = [[] for _ in range(G * G)]
        for f in range(n):
            for i in range(c0[f, 0], c1[f, 0] + 1):
                row = i * G
                for j in range(c0[f, 1], c1[f, 1] + 1):
                    buckets[row + j].append(f)
        width = max(1, max(len(b) for b in buckets))
        table = np.full((G * G, width), -1, dtype=np.int64)
        for c, b in enumerate(buckets):
            table[c, :len(b)] = b
        self.table = table
        self.counts = np.array([len(b) for b in buckets])

    def cells(self, pts: np.ndarray) -> np.ndarray:
        u = (pts - self.lo) / self.span * self.G
        c = np.clip(np.floor(u).astype(int), 0, self.G - 1)
        return c[:, 0] * self.G + c[:, 1]

    def groups(self, pts: np.ndarray):
        """Yield (query indices, candidate table) with padding sized per group."""
        cell = self.cells(pts)
        cnt = self.counts[cell]
        lo = 0
        w = 8
        while lo < self.table.shape[1]:
            sel = np.flatnonzero((cnt > lo) & (cnt <= w))
            if len(sel):
                yield sel, self.table[cell[sel], :min(w, self.table.shape[1])]
            lo, w = w, 4 * w


class ValueFunction:
    """V(x) = min_lambda J.lambda s.t. sum lambda_d x_d = x, in closed form.

    The lower facets of the 3-D hull of (s, v, J) are the affine pieces of
    the envelope; inside the domain hull V is their pointwise maximum.
    Points at or past ``s_tl`` evaluate to 0 through ``__call__``.
    """

    def __init__(self, states: np.ndarray, J: np.ndarray, s_tl: float = 0.0):
        states = np.asarray(states, dtype=float).reshape(-1, 2)
        J = np.asarray(J, dtype=float).reshape(-1)
        fin = np.isfinite(J)
        self.states, self.J, self.s_tl = states[fin], J[fin], s_tl
        self.planes = np.zeros((0, 3))
        self.degenerate = False
        if len(self.J) == 0:
            self.domain = empty_region()
            return
        self.domain = convex_hull(self.states)
        if self.domain.vertices is None or len(self.domain.vertices) < 3:
            self.degenerate = True
            return
        self._build()

    def _build(self):
        pts = self.states
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        jlo = self.J.min()
        jspan = max(self.J.max() - jlo, 1e-9)
        P3 = np.column_stack([(pts - lo) / span, (self.J - jlo) / jspan])
        # an extra point far above keeps the hull full-dimensional when the
        # J values are coplanar; it only creates upper facets
        top = np.array([[0.5, 0.5, 10.0 + P3[:, 2].max()]])
        try:
            hull = ConvexHull(np.vstack([P3, top]))
        except QhullError:
            hull = ConvexHull(np.vstack([P3, top]), qhull_options="QJ")
        eq = hull.equations
        lower = eq[:, 2] < -1e-9
        eq = eq[lower]
        simp = hull.simplices[lower]
        # scaled plane: a s' + b v' + c J' + d = 0  ->  J = p0 s + p1 v + p2
        a, b, c, d = eq.T
        p0 = -a / c / span[0] * jspan
        p1 = -b / c / span[1] * jspan
        p2 = (-d / c) * jspan + jlo - p0 * lo[0] - p1 * lo[1]
        self.planes = np.column_stack([p0, p1, p2])
        self.facet_vertices = simp
        tris = np.vstack([P3, top])[simp][:, :, :2] * span + lo
        self._facet_xy = tris
        self._index = _TriangleIndex(tris, lo, hi)
        # index -1 (empty slot) hits a plane at -inf
        pad = np.vstack([self.planes, [0.0, 0.0, -np.inf]])
        self._padded = (pad[:, 0].copy(), pad[:, 1].copy(), pad[:, 2].copy())

    def envelope(self, pts, tol: float = 1e-7) -> np.ndarray:
        """Lower envelope; +inf outside the domain hull."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.full(len(pts), np.inf)
        if len(self.J) == 0:
            return out
        inside = self.domain.contains_many(pts, tol)
        if not inside.any():
            return out
        q = pts[inside]
        if self.degenerate:
            out[inside] = [_lp_value(self.states, self.J, x) for x in q]
            return out
        vals = np.full(len(q), -np.inf)
        if len(self.planes) <= 512:
            # convexity: V is the max over every lower facet plane
            for i in range(0, len(q), 20000):
                qq = q[i:i + 20000]
                vals[i:i + 20000] = (qq @ self.planes[:, :2].T + self.planes[:, 2]).max(axis=1)
            out[inside] = vals
            return out
        p0, p1, p2 = self._padded
        for sel, cand in self._index.groups(q):
            qq = q[sel]
            z = p0[cand] * qq[:, 0:1] + p1[cand] * qq[:, 1:2] + p2[cand]
            vals[sel] = z.max(axis=1)
        out[inside] = vals
        return out

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.zeros(len(pts))
        before = pts[:, 0] < self.s_tl
        if before.any():
            out[before] = self.envelope(pts[before])
        return out

    def planes_near(self, lo, hi) -> np.ndarray:
        """Planes whose facet meets the box [lo, hi] in (s, v)."""
        if len(self.planes) == 0:
            return self.planes
        fmin, fmax = self._facet_xy.min(axis=1), self._facet_xy.max(axis=1)
        keep = np.all(fmax >= np.asarray(lo), axis=1) & np.all(fmin <= np.asarray(hi), axis=1)
        return self.planes[keep]


def _lp_value(states: np.ndarray, J: np.ndarray, x) -> float:
    n = len(J)
    A = np.vstack([states.T, np.ones(n)])
    b = np.array([x[0], x[1], 1.0])
    res = linprog(J, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        return math.inf
    return float(res.fun)


# ---------------------------------------------------------------------------
# Algorithm 2


@dataclass(frozen=True, eq=False)
class CostToGoTable:
    states: np.ndarray
    J: np.ndarray
    s_tl: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        st = np.asarray(self.states, dtype=float).reshape(-1, 2)
        J = np.asarray(self.J, dtype=float).reshape(-1)
        if len(st) != len(J):
            raise ValueError("states and J must have equal length")
        if np.any(J < 0):
            raise ValueError("cost-to-go must be nonnegative")
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "J", J)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.J)

    def value_function(self) -> ValueFunction:
        return ValueFunction(self.states, self.J, self.s_tl)

    def to_json(self) -> dict:
        pts = [[float(s), float(v), float(j) if math.isfinite(j) else "inf"]
               for (s, v), j in zip(self.states, self.J)]
        return {"s_tl": self.s_tl, "points": pts}

    @classmethod
    def from_json(cls, obj: dict) -> "CostToGoTable":
        pts = obj["points"]
        st = np.array([[p[0], p[1]] for p in pts], dtype=float).reshape(-1, 2)
        J = np.array([math.inf if p[2] == "inf" else float(p[2]) for p in pts])
        return cls(st, J, float(obj["s_tl"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "CostToGoTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def cost_to_go(D: Dataset, s_tl: float = 0.0, sys: SystemMatrices = DEFAULT_SYS,
               L: float = 0.05, W: SInterval = DEFAULT_W, noise_samples_per_point: int = 16,
               rng: Optional[np.random.Generator] = None, model: EnergyModel = DEFAULT_MODEL,
               tol: float = 1e-6, k_max: int = 200, noise: Optional[NoiseModel] = None,
               return_history: bool = False):
    """Data-driven cost-to-go of every data state towards {s >= s_tl}.

    J_{k+1,j} = l(x_j, u_j) + mean_n V_k(A x_j + B u_j + F n) for pairs whose
    successor, widened by the lumped-noise bound, lies in the target or in
    the hull of pairs that were finite at iteration k; +inf otherwise.  V_k
    is zero on the target and the lower convex envelope of the finite J_k
    elsewhere.  The noise draws are fixed for the whole run.
    """
    if len(D) == 0:
        raise ValueError("cost_to_go needs a nonempty dataset")
    rng = rng if rng is not None else np.random.default_rng(0)
    states, inputs = D.states, D.inputs
    succ = D.successors(sys)
    ell = stage_cost(model, states[:, 1], inputs)
    if np.any(ell < 0):
        raise ValueError("stage cost must be nonnegative")
    if L > 0:
        nz = sample_lumped_noise(rng, noise_samples_per_point, L,
                                 noise or NoiseModel(W))
    else:
        nz = np.zeros(1)
    m = robust_margin(L, W)
    lo = np.column_stack([succ[:, 0] - m, succ[:, 1]])
    hi = np.column_stack([np.minimum(succ[:, 0] + m, s_tl), succ[:, 1]])
    past = lo[:, 0] >= s_tl

    J = np.full(len(D), np.inf)
    pattern = np.zeros(len(D), dtype=bool)
    vf: Optional[ValueFunction] = None
    history = []
    for k in range(k_max):
        if vf is None:
            ok = past.copy()
        else:
            ok = past | (vf.domain.contains_many(lo) & vf.domain.contains_many(hi))
        J_new = np.full(len(D), np.inf)
        if ok.any():
            q = succ[ok][:, None, :] + np.stack([nz, np.zeros_like(nz)], axis=1)[None]
            q = q.reshape(-1, 2)
            vals = np.zeros(len(q))
            pre = q[:, 0] < s_tl
            if pre.any():
                vals[pre] = vf.envelope(q[pre])
            vals = vals.reshape(-1, len(nz)).mean(axis=1)
            J_new[ok] = ell[ok] + vals
        if not np.all(np.isfinite(J_new[ok])):
            raise NonConvergenceError("successor value outside the learned domain")
        same = np.array_equal(ok, pattern)
        delta = float(np.abs(J_new[ok] - J[ok]).max(initial=0.0)) if same else math.inf
        history.append((k, int(ok.sum()), delta))
        step = None
        if same:
            step = np.full(len(J), np.inf)
            step[ok] = np.abs(J_new[ok] - J[ok])
        J, pattern = J_new, ok
        if same and delta <= tol:
            table = CostToGoTable(states, J, s_tl, k + 1)
            return (table, history) if return_history else table
        vf = ValueFunction(states[ok], J[ok], s_tl)
    raise NonConvergenceError(
        f"cost-to-go did not converge in {k_max} iterations "
        f"(finite points {int(pattern.sum())}/{len(D)}, last change {history[-1][2]:.3g})",
        J=J, delta=step)


def evaluate_V(table: CostToGoTable, x) -> float:
    """Value at one state by the convex-weight LP; 0 past the light."""
    x = np.asarray(x, dtype=float).reshape(2)
    if x[0] >= table.s_tl:
        return 0.0
    fin = table.finite
    if not fin.any():
        return math.inf
    return _lp_value(table.states[fin], table.J[fin], x)


def prune_value_points(table: CostToGoTable) -> CostToGoTable:
    """Keep the finite points that support the lower envelope."""
    fin = table.finite
    st, J = table.states[fin], table.J[fin]
    if len(J) <= 3:
        return CostToGoTable(st, J, table.s_tl, table.iterations)
    vf = ValueFunction(st, J, table.s_tl)
    if vf.degenerate:
        return CostToGoTable(st, J, table.s_tl, table.iterations)
    keep = np.zeros(len(J), dtype=bool)
    fv = vf.facet_vertices
    keep[fv[fv < len(J)]] = True
    # the cheapest point at each domain corner pins the domain
    for c in vf.domain.vertices:
        at = np.flatnonzero(np.all(np.abs(st - c) <= 1e-9, axis=1))
        if len(at):
            keep[at[np.argmin(J[at])]] = True
    return CostToGoTable(st[keep], J[keep], table.s_tl, table.iterations)

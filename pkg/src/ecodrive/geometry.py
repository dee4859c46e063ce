"""Exact-enough 2-D convex set arithmetic over (position, speed) space.

Regions keep a halfplane list ``a_s*s + a_v*v <= b`` and, when bounded, a
counter-clockwise vertex list.  Only Minkowski/Pontryagin operations with
segments along the position axis are supported, which is all the
controller ever needs (noise enters the position channel only).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

TIGHT_TOL = 1e-9
MEMBER_TOL = 1e-7


class Point2(NamedTuple):
    s: float
    v: float


@dataclass(frozen=True)
class SInterval:
    """Closed interval of position offsets (m)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval lo={self.lo} > hi={self.hi}")

    @property
    def radius(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def scaled(self, c: float) -> "SInterval":
        a, b = c * self.lo, c * self.hi
        return SInterval(min(a, b), max(a, b))

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class HalfPlane:
    a_s: float
    a_v: float
    b: float

    def __post_init__(self):
        if self.a_s == 0.0 and self.a_v == 0.0:
            raise ValueError("halfplane normal must be nonzero")


def _normalize(hp: np.ndarray) -> np.ndarray:
    hp = np.asarray(hp, dtype=float).reshape(-1, 3)
    norms = np.hypot(hp[:, 0], hp[:, 1])
    if np.any(norms == 0.0):
        raise ValueError("halfplane normal must be nonzero")
    return hp / norms[:, None]


@dataclass(frozen=True, eq=False)
class ConvexRegion2:
    """Convex subset of the (s, v) plane.

    ``vertices`` is None for unbounded regions and an empty array for the
    empty region.
    """

    halfplanes: np.ndarray
    vertices: Optional[np.ndarray] = None
    empty: bool = False

    def __post_init__(self):
        hp = np.asarray(self.halfplanes, dtype=float).reshape(-1, 3)
        hp.setflags(write=False)
        object.__setattr__(self, "halfplanes", hp)
        if self.vertices is not None:
            vs = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
            vs.setflags(write=False)
            object.__setattr__(self, "vertices", vs)

    @property
    def bounded(self) -> bool:
        return self.vertices is not None

    def contains(self, p, tol: float = MEMBER_TOL) -> bool:
        return contains(self, p, tol)

    def contains_many(self, pts, tol: float = MEMBER_TOL) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if self.empty:
            return np.zeros(len(pts), dtype=bool)
        if len(self.halfplanes) == 0:
            return np.ones(len(pts), dtype=bool)
        lhs = pts @ self.halfplanes[:, :2].T
        return np.all(lhs <= self.halfplanes[:, 2] + tol, axis=1)

    def s_range(self) -> tuple[float, float]:
        if self.empty:
            return (np.inf, -np.inf)
        if self.bounded:
            return float(self.vertices[:, 0].min()), float(self.vertices[:, 0].max())
        return _support_range(self.halfplanes, axis=0)

    def to_json(self) -> dict:
        if self.empty:
            verts = []
        elif self.vertices is None:
            verts = None
        else:
            verts = self.vertices.tolist()
        return {"halfplanes": self.halfplanes.tolist(), "vertices": verts}

    @classmethod
    def from_json(cls, obj: dict) -> "ConvexRegion2":
        verts = obj.get("vertices")
        hp = np.asarray(obj["halfplanes"], dtype=float).reshape(-1, 3)
        if verts is not None and len(verts) == 0:
            return cls(hp, np.zeros((0, 2)), empty=True)
        return cls(hp, None if verts is None else np.asarray(verts, dtype=float))

    def __repr__(self):
        if self.empty:
            return "ConvexRegion2(empty)"
        if self.vertices is None:
            return f"ConvexRegion2(unbounded, {len(self.halfplanes)} halfplanes)"
        return f"ConvexRegion2({len(self.vertices)} vertices)"


def empty_region() -> ConvexRegion2:
    # s <= -1 and s >= 1: a canonical infeasible pair
    hp = np.array([[1.0, 0.0, -1.0], [-1.0, 0.0, -1.0]])
    return ConvexRegion2(hp, np.zeros((0, 2)), empty=True)


def halfplane_region(rows: Iterable[Sequence[float]]) -> ConvexRegion2:
    """Region from raw halfplane rows; bounded-ness and vertices are resolved."""
    return intersect([ConvexRegion2(_normalize(np.asarray(list(rows), dtype=float)))])


def before_light(s_tl: float) -> ConvexRegion2:
    """{x | s <= s_tl}."""
    return ConvexRegion2(np.array([[1.0, 0.0, s_tl]]))


def after_light(s_tl: float) -> ConvexRegion2:
    """{x | s >= s_tl}."""
    return ConvexRegion2(np.array([[-1.0, 0.0, -s_tl]]))


def speed_band(v_min: float, v_max: float) -> ConvexRegion2:
    return ConvexRegion2(np.array([[0.0, 1.0, v_max], [0.0, -1.0, -v_min]]))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_vertices(pts: np.ndarray) -> np.ndarray:
    """CCW hull vertices without collinear points.

    Large sets are thinned with Qhull first; Andrew's monotone chain then
    fixes the order and drops near-collinear vertices.
    """
    pts = np.unique(np.round(pts, 12), axis=0)
    if len(pts) <= 2:
        return pts
    if len(pts) > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    scale = max(1.0, float(np.abs(pts).max()))
    eps = 1e-12 * scale * scale
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    p = [tuple(x) for x in pts[order]]

    lower: list = []
    for q in p:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], q) <= eps:
            lower.pop()
        lower.append(q)
    upper: list = []
    for q in reversed(p):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], q) <= eps:
            upper.pop()
        upper.append(q)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=float)


def _region_from_vertices(verts: np.ndarray) -> ConvexRegion2:
    n = len(verts)
    if n == 1:
        s, v = verts[0]
        hp = np.array([[1, 0, s], [-1, 0, -s], [0, 1, v], [0, -1, -v]], dtype=float)
        return ConvexRegion2(hp, verts)
    if n == 2:
        p, q = verts
        d = q - p
        d = d / np.hypot(*d)
        nrm = np.array([d[1], -d[0]])
        hp = np.array(
            [
                [*nrm, nrm @ p],
                [*(-nrm), -(nrm @ p)],
                [*d, d @ q],
                [*(-d), -(d @ p)],
            ]
        )
        return ConvexRegion2(hp, verts)
    nxt = np.roll(verts, -1, axis=0)
    edge = nxt - verts
    normals = np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    normals /= np.hypot(normals[:, 0], normals[:, 1])[:, None]
    b = np.einsum("ij,ij->i", normals, verts)
    return ConvexRegion2(np.column_stack([normals, b]), verts)


def convex_hull(points) -> ConvexRegion2:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite point")
    return _region_from_vertices(_hull_vertices(pts))


def contains(r: ConvexRegion2, p, tol: float = MEMBER_TOL) -> bool:
    return bool(r.contains_many(np.asarray(p, dtype=float).reshape(1, 2), tol)[0])


def _support_range(hp: np.ndarray, axis: int) -> tuple[float, float]:
    lo, hi = -np.inf, np.inf
    for a_s, a_v, b in hp:
        a = (a_s, a_v)
        other = a[1 - axis]
        if abs(other) > 1e-15:
            continue
        c = a[axis]
        if c > 0:
            hi = min(hi, b / c)
        elif c < 0:
            lo = max(lo, b / c)
    return lo, hi


def _enumerate_vertices(hp: np.ndarray, box: float) -> tuple[np.ndarray, bool]:
    """Vertices of {hp} clipped to a large box, plus whether the box was hit."""
    boxed = np.vstack(
        [hp, [[1, 0, box], [-1, 0, box], [0, 1, box], [0, -1, box]]]
    )
    a = boxed[:, :2]
    b = boxed[:, 2]
    i, j = np.triu_indices(len(boxed), k=1)
    det = a[i, 0] * a[j, 1] - a[i, 1] * a[j, 0]
    ok = np.abs(det) > 1e-12
    i, j, det = i[ok], j[ok], det[ok]
    xs = (b[i] * a[j, 1] - a[i, 1] * b[j]) / det
    ys = (a[i, 0] * b[j] - b[i] * a[j, 0]) / det
    cand = np.column_stack([xs, ys])
    scale = np.maximum(1.0, np.abs(cand).max(axis=1))
    viol = cand @ a.T - b
    feas = np.all(viol <= TIGHT_TOL * scale[:, None] * 10, axis=1)
    cand = cand[feas]
    hit = bool(len(cand)) and bool(np.any(np.abs(cand) >= box * (1 - 1e-9)))
    return cand, hit


def _resolve(hp: np.ndarray) -> ConvexRegion2:
    """Build a region from halfplanes: detect emptiness, boundedness, vertices."""
    hp = _normalize(hp) if len(hp) else np.zeros((0, 3))
    if len(hp) == 0:
        return ConvexRegion2(hp)
    box = 1e6 + 10.0 * float(np.abs(hp[:, 2]).max())
    cand, hit = _enumerate_vertices(hp, box)
    if len(cand) == 0:
        return empty_region()
    if hit:
        return ConvexRegion2(_dedupe_rows(hp))
    verts = _hull_vertices(cand)
    return _region_from_vertices(verts)


def _dedupe_rows(hp: np.ndarray) -> np.ndarray:
    # keep the tightest offset per normal direction
    keys = np.round(hp[:, :2], 12)
    out = {}
    for k, row in zip(map(tuple, keys), hp):
        if k not in out or row[2] < out[k][2]:
            out[k] = row
    return np.array(list(out.values()))


def intersect(rs: Sequence[ConvexRegion2]) -> ConvexRegion2:
    if len(rs) == 0:
        raise ValueError("intersect needs at least one region")
    if any(r.empty for r in rs):
        return empty_region()
    hp = np.vstack([r.halfplanes for r in rs if len(r.halfplanes)] or [np.zeros((0, 3))])
    return _resolve(hp)


def erode_s(r: ConvexRegion2, d: float) -> ConvexRegion2:
    """Pontryagin difference with the segment {(x, 0) : |x| <= d}."""
    if d < 0:
        raise ValueError("erosion distance must be nonnegative")
    if r.empty:
        return r
    if d == 0:
        return r
    hp = np.array(r.halfplanes, dtype=float)
    hp[:, 2] -= d * np.abs(hp[:, 0])
    if r.bounded or len(hp) > 1:
        return _resolve(hp)
    return ConvexRegion2(hp)


def dilate_s(r: ConvexRegion2, d: float) -> ConvexRegion2:
    """Minkowski sum with the segment {(x, 0) : |x| <= d}."""
    if d < 0:
        raise ValueError("dilation distance must be nonnegative")
    if r.empty or d == 0:
        return r
    if r.bounded:
        v = r.vertices
        shifted = np.vstack([v + [d, 0.0], v - [d, 0.0]])
        return convex_hull(shifted)
    hp = np.array(r.halfplanes, dtype=float)
    hp[:, 2] += d * np.abs(hp[:, 0])
    return ConvexRegion2(hp)


def shift_s(r: ConvexRegion2, ds: float) -> ConvexRegion2:
    """Translate a region by ds along the position axis."""
    if r.empty or ds == 0:
        return r
    hp = np.array(r.halfplanes, dtype=float)
    hp[:, 2] += hp[:, 0] * ds
    verts = None if r.vertices is None else r.vertices + [ds, 0.0]
    return ConvexRegion2(hp, verts)

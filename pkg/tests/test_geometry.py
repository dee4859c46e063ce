import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecodrive.geometry import (ConvexRegion2, after_light, before_light, contains, convex_hull,
                               dilate_s, erode_s, halfplane_region, intersect, shift_s)
from oracles import brute_force_hull, point_in_polygon

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
points = st.lists(st.tuples(coord, coord), min_size=3, max_size=30)


def square(s0, s1, v0, v1):
    return convex_hull([(s0, v0), (s1, v0), (s1, v1), (s0, v1)])


def same_vertex_set(a, b, tol=1e-9):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    return all(np.min(np.abs(b - p).max(axis=1)) < tol for p in a)


def test_hull_drops_interior_point():
    r = convex_hull([(0, 0), (1, 0), (0, 1), (0.2, 0.2)])
    assert same_vertex_set(r.vertices, [(0, 0), (1, 0), (0, 1)])


def test_hull_single_point_is_degenerate_region():
    r = convex_hull([(0, 0)])
    assert r.bounded and len(r.vertices) == 1
    assert r.contains((0, 0)) and not r.contains((0.1, 0))


def test_hull_of_collinear_points_is_segment():
    r = convex_hull([(0, 0), (1, 1), (2, 2), (0.5, 0.5)])
    assert same_vertex_set(r.vertices, [(0, 0), (2, 2)])
    assert r.contains((1.5, 1.5)) and not r.contains((1, 1.2))


def test_hull_rejects_empty_input():
    with pytest.raises(ValueError, match="empty point set"):
        convex_hull([])


def test_hull_matches_brute_force_on_random_points():
    rng = np.random.default_rng(1)
    pts = rng.random((100, 2))
    r = convex_hull(pts)
    assert same_vertex_set(r.vertices, brute_force_hull(pts))


@settings(max_examples=50, deadline=None)
@given(points, st.randoms(use_true_random=False))
def test_hull_invariant_to_permutation(pts, rnd):
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    a, b = convex_hull(pts), convex_hull(shuffled)
    assert same_vertex_set(a.vertices, b.vertices)


@settings(max_examples=50, deadline=None)
@given(points)
def test_vertices_satisfy_own_halfplanes(pts):
    r = convex_hull(pts)
    lhs = r.vertices @ r.halfplanes[:, :2].T
    scale = max(1.0, np.abs(r.vertices).max())
    assert np.all(lhs <= r.halfplanes[:, 2] + 1e-9 * scale)


def test_contains_examples():
    T = before_light(200.0)
    assert contains(T, (199, 5))
    assert not contains(T, (201, 5))
    assert contains(convex_hull([(0, 0), (2, 0), (0, 2)]), (1, 1))


def test_contains_agrees_with_winding_test():
    rng = np.random.default_rng(2)
    r = convex_hull(rng.normal(size=(12, 2)))
    q = rng.uniform(-3, 3, size=(10_000, 2))
    got = r.contains_many(q, tol=0.0)
    want = np.array([point_in_polygon(r.vertices, p) for p in q])
    # points within rounding distance of an edge may differ; there are none at this density
    assert np.mean(got == want) == 1.0


def test_erode_halfplane_shifts_offset():
    r = erode_s(before_light(200.0), 3.0)
    assert r.contains((197, 0)) and not r.contains((197.01, 0))


def test_erode_square_by_terminal_amount():
    r = erode_s(square(0, 10, 0, 5), 4.5)
    assert same_vertex_set(r.vertices, [(4.5, 0), (5.5, 0), (5.5, 5), (4.5, 5)])


def test_erode_by_zero_is_identity():
    r = square(0, 3, 1, 2)
    assert same_vertex_set(erode_s(r, 0.0).vertices, r.vertices)


def test_erode_too_far_is_empty():
    assert erode_s(square(0, 2, 0, 1), 1.5).empty


def test_dilate_examples():
    r = dilate_s(before_light(197.0), 3.0)
    assert r.contains((200, 0)) and not r.contains((200.01, 0))
    seg = dilate_s(convex_hull([(5, 2)]), 1.0)
    assert same_vertex_set(seg.vertices, [(4, 2), (6, 2)])


def test_negative_distances_rejected():
    with pytest.raises(ValueError):
        erode_s(before_light(0), -1)
    with pytest.raises(ValueError):
        dilate_s(before_light(0), -1)


@settings(max_examples=50, deadline=None)
@given(points, st.floats(0, 5))
def test_erode_dilate_round_trips(pts, d):
    r = convex_hull(pts)
    opened = dilate_s(erode_s(r, d), d)
    if not opened.empty:
        assert np.all(r.contains_many(opened.vertices, tol=1e-6))
    closed = erode_s(dilate_s(r, d), d)
    assert np.all(closed.contains_many(r.vertices, tol=1e-6))


def test_intersect_examples():
    line = intersect([before_light(200), after_light(200)])
    assert not line.empty and line.contains((200, 7)) and not line.contains((200.1, 7))
    assert intersect([before_light(197), after_light(203)]).empty


def test_intersect_two_triangles_matches_sampling():
    rng = np.random.default_rng(3)
    a, b = convex_hull(rng.random((3, 2))), convex_hull(rng.random((3, 2)) + 0.3)
    r = intersect([a, b])
    q = rng.uniform(-0.2, 1.5, size=(10_000, 2))
    want = a.contains_many(q, 0.0) & b.contains_many(q, 0.0)
    got = r.contains_many(q, 0.0) if not r.empty else np.zeros(len(q), bool)
    assert np.mean(got != want) < 1e-3


def test_halfplane_region_resolves_box():
    r = halfplane_region([[1, 0, 10], [-1, 0, 0], [0, 1, 5], [0, -1, 0]])
    assert same_vertex_set(r.vertices, [(0, 0), (10, 0), (10, 5), (0, 5)])


def test_shift_moves_region():
    r = shift_s(square(0, 1, 0, 1), 5.0)
    assert r.contains((5.5, 0.5)) and not r.contains((0.5, 0.5))


@pytest.mark.parametrize("r", [before_light(3.0), square(0, 1, 0, 2), erode_s(square(0, 1, 0, 1), 2)])
def test_json_round_trip(r):
    back = ConvexRegion2.from_json(json.loads(json.dumps(r.to_json())))
    assert back.empty == r.empty and back.bounded == r.bounded
    assert np.allclose(back.halfplanes, r.halfplanes)

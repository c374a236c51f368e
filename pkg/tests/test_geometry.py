import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqmeasure.geometry import (Box, CurveError, SelfIntersectionError, curve_from_vertices, distance_to_curve,
                                make_curve, normals_at, point_at, points_at, read_polyline, write_polyline)


@pytest.fixture
def seg():
    return make_curve("segment", 2, start=(-1, 0), end=(1, 0))


def test_segment_length(seg):
    assert seg.length == 2.0
    assert seg.kind == "segment"


def test_circle_arc_length():
    c = make_curve("circle-arc", 64, center=(0, 0), radius=1.0, angles=(0, math.pi))
    # inscribed polygon with 63 equal chords over a half turn
    expected = 2 * 63 * math.sin(math.pi / (2 * 63))
    assert c.length == pytest.approx(expected, rel=1e-12)
    assert abs(c.length - math.pi) < 1e-3
    np.testing.assert_allclose(np.hypot(*c.vertices.T), 1.0, atol=1e-15)


def test_crossing_polyline_rejected():
    verts = [(0, 0), (2, 0), (2, 1), (1, 1), (1, -1)]
    with pytest.raises(SelfIntersectionError) as err:
        curve_from_vertices(verts, max_turn_deg=180)
    assert err.value.pair == (0, 3)


def test_turning_angle_bound():
    with pytest.raises(CurveError):
        curve_from_vertices([(0, 0), (1, 0), (1, 1)])
    curve_from_vertices([(0, 0), (1, 0), (1, 1)], max_turn_deg=91)


def test_repeated_vertex_rejected():
    with pytest.raises(CurveError):
        curve_from_vertices([(0, 0), (0, 0), (1, 0)])


def test_resolution_and_radius_checked():
    with pytest.raises(CurveError):
        make_curve("segment", 1)
    with pytest.raises(CurveError):
        make_curve("circle-arc", 8, radius=-1.0)


def test_point_at(seg):
    np.testing.assert_array_equal(point_at(seg, 1.0), [0, 0])
    np.testing.assert_array_equal(point_at(seg, 0.0), [-1, 0])
    np.testing.assert_array_equal(point_at(seg, seg.length), [1, 0])
    with pytest.raises(CurveError):
        point_at(seg, -1e-9)
    with pytest.raises(CurveError):
        point_at(seg, 2.1)


def test_normals(seg):
    n_plus, n_minus = normals_at(seg, 0.3)
    np.testing.assert_allclose(n_plus, [0, 1])
    np.testing.assert_allclose(n_minus, [0, -1])
    down = make_curve("segment", 2, start=(0, 1), end=(0, -1))
    n_plus, n_minus = normals_at(down, 0.5)
    np.testing.assert_allclose(n_plus, [1, 0], atol=1e-15)
    np.testing.assert_allclose(n_minus, [-1, 0], atol=1e-15)


def test_normal_at_vertex_rejected():
    c = make_curve("segment", 3)
    with pytest.raises(CurveError):
        normals_at(c, 1.0)


def test_distance(seg):
    assert distance_to_curve(seg, (0, 1)) == 1.0
    assert distance_to_curve(seg, (0.3, 0)) == 0.0
    assert distance_to_curve(seg, (2, 0)) == 1.0
    np.testing.assert_allclose(distance_to_curve(seg, [(0, -2), (-1, 3)]), [2, 3])


def test_polyline_file_roundtrip(tmp_path):
    verts = np.array([[0.0, 0.0], [1.0, 0.1], [2.0, 0.15]])
    path = tmp_path / "curve.txt"
    write_polyline(path, verts)
    np.testing.assert_array_equal(read_polyline(path), verts)
    c = make_curve("polyline-file", path=path)
    assert c.kind == "polyline-file"
    assert c.n_segments == 2


def test_polyline_file_needs_two_points(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("0 0\n")
    with pytest.raises(CurveError):
        read_polyline(path)


def test_box_grids():
    b = Box.centered(2.0)
    c = b.cell_centers(0.5)
    assert c.shape == (64, 2)
    np.testing.assert_allclose(c[0], [-1.75, -1.75])
    np.testing.assert_allclose(c[1], [-1.75, -1.25])
    xs, ys = b.node_axes(0.25)
    assert len(xs) == 17 and xs[-1] == 2.0
    with pytest.raises(ValueError):
        b.cell_centers(0.3)


params = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@given(s=params, t=params, n=st.integers(min_value=3, max_value=40))
def test_point_at_is_1_lipschitz(s, t, n):
    c = make_curve("circle-arc", n, radius=1.3, angles=(0.2, 2.5), max_turn_deg=90)
    L = c.length
    p, q = point_at(c, s * L), point_at(c, t * L)
    assert np.hypot(*(p - q)) <= abs(s - t) * L + 1e-12


@given(n=st.integers(min_value=3, max_value=30))
def test_points_on_curve_have_zero_distance(n):
    c = make_curve("circle-arc", n, radius=0.7, angles=(0.0, 2.0), max_turn_deg=90)
    ts = c.segment_midpoints(3)
    np.testing.assert_allclose(distance_to_curve(c, points_at(c, ts)), 0.0, atol=1e-14)


def test_arc_distance_to_center_increases_to_radius():
    d = [distance_to_curve(make_curve("circle-arc", n, radius=1.0, angles=(0, math.pi), max_turn_deg=90), (0, 0))
         for n in (8, 16, 32, 64, 128)]
    assert all(x < 1.0 for x in d)
    assert all(a < b for a, b in zip(d, d[1:]))
    assert 1.0 - d[-1] < 1e-3

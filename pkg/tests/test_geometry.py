import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from chromoseg.geometry import (
    Boundary,
    convex_hull,
    count_endpoints,
    hull_pixel_count,
    min_enclosing_ellipse,
    points_in_hull,
    signed_area,
    skeletonize,
    trace_boundary,
    zhang_suen,
)
from chromoseg.raster import Region, region_from_mask

from conftest import (
    brute_extreme_points,
    brute_lattice_count,
    disk,
    reference_zhang_suen,
    thick_segments,
)

EIGHT = np.ones((3, 3), bool)

point_sets = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)),
                      min_size=1, max_size=25, unique=True)


def blob(rng, size=14, p=0.55, smooth=1):
    """Random solid 8-connected blob without holes."""
    m = rng.random((size, size)) < p
    m = ndimage.binary_opening(m, iterations=smooth) | ndimage.binary_closing(m)
    lab, n = ndimage.label(m, EIGHT)
    if n == 0:
        m = np.zeros((size, size), bool)
        m[size // 2, size // 2] = True
        return m
    sizes = ndimage.sum(m, lab, range(1, n + 1))
    m = lab == 1 + int(np.argmax(sizes))
    return ndimage.binary_fill_holes(m)


# -- boundary ---------------------------------------------------------------

def test_single_pixel_boundary():
    b = trace_boundary(Region(1, [(4, 7)]))
    assert b.n == 1 and b.points.tolist() == [[4, 7]]


def test_square_boundary_is_clockwise_perimeter():
    b = trace_boundary(region_from_mask(np.ones((3, 3), bool)))
    assert b.points.tolist() == [[0, 0], [1, 0], [2, 0], [2, 1], [2, 2], [1, 2], [0, 2], [0, 1]]
    assert signed_area(b.points) < 0


def test_bar_boundary_revisits_middle():
    b = trace_boundary(region_from_mask(np.ones((1, 3), bool)))
    assert b.n == 4
    assert b.points.tolist() == [[0, 0], [1, 0], [2, 0], [1, 0]]


def test_boundary_in_image_coordinates():
    b = trace_boundary(region_from_mask(np.ones((2, 2), bool), x0=10, y0=20))
    assert b.points.tolist() == [[10, 20], [11, 20], [11, 21], [10, 21]]


def test_boundary_ignores_holes():
    m = disk(6)
    m[4:9, 4:9] = False
    b = trace_boundary(region_from_mask(m))
    outer = trace_boundary(region_from_mask(ndimage.binary_fill_holes(m)))
    assert np.array_equal(b.points, outer.points)


@pytest.mark.parametrize("seed", range(40))
def test_boundary_invariants_on_random_blobs(seed):
    rng = np.random.default_rng(seed)
    m = blob(rng, size=int(rng.integers(3, 20)), p=rng.uniform(0.3, 0.8))
    region = region_from_mask(m)
    b = trace_boundary(region)
    pts = b.points
    pix = region.pixel_set()
    step = np.abs(np.diff(np.vstack([pts, pts[:1]]), axis=0))
    if b.n > 1:
        assert np.all(step.max(axis=1) == 1), "consecutive points must be 8-neighbours"
    assert all(tuple(p) in pix for p in pts.tolist())
    padded = np.pad(m, 1)
    for x, y in pts.tolist():
        assert not padded[y:y + 3, x:x + 3].all(), "boundary point without background neighbour"
    visited = {tuple(p) for p in pts.tolist()}
    four = ((1, 0), (-1, 0), (0, 1), (0, -1))
    for x, y in pix:
        if any((x + dx, y + dy) not in pix for dx, dy in four):
            assert (x, y) in visited
    assert signed_area(pts) <= 0


def test_signed_area_orientation():
    ccw_on_screen = [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert signed_area(ccw_on_screen) == pytest.approx(1.0)
    assert signed_area(ccw_on_screen[::-1]) == pytest.approx(-1.0)


# -- convex hull --------------------------------------------------------------

def test_hull_of_triangle():
    h = convex_hull([(0, 0), (4, 1), (1, 3)])
    assert {tuple(v) for v in h.vertices.tolist()} == {(0, 0), (4, 1), (1, 3)}


def test_hull_of_collinear_points():
    h = convex_hull([(i, 2 * i) for i in range(5)])
    assert sorted(map(tuple, h.vertices.tolist())) == [(0, 0), (4, 8)]


def test_hull_of_single_point_and_empty():
    assert convex_hull([(3, 3), (3, 3)]).vertices.tolist() == [[3, 3]]
    with pytest.raises(ValueError):
        convex_hull(np.zeros((0, 2)))


def test_hull_matches_extreme_point_oracle_on_grid(rng):
    for _ in range(10):
        pts = rng.integers(0, 20, (50, 2))
        got = {tuple(v) for v in convex_hull(pts).vertices.tolist()}
        assert got == brute_extreme_points(pts.tolist())


@given(point_sets)
def test_hull_properties(pts):
    h = convex_hull(pts)
    v = h.vertices
    assert {tuple(p) for p in v.tolist()} == brute_extreme_points(pts)
    assert points_in_hull(h, pts).all()
    if len(v) >= 3:
        for i in range(len(v)):
            a, b, c = v[i], v[(i + 1) % len(v)], v[(i + 2) % len(v)]
            assert (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


def test_hull_pixel_counts():
    assert hull_pixel_count(convex_hull(region_from_mask(np.ones((4, 4), bool)))) == 16
    plus = np.zeros((5, 5), bool)
    plus[2, :] = plus[:, 2] = True
    assert hull_pixel_count(convex_hull(region_from_mask(plus))) == 13
    assert hull_pixel_count(convex_hull([(7, 1)])) == 1
    assert hull_pixel_count(convex_hull([(0, 0), (6, 3)])) == 4


@given(point_sets)
def test_hull_pixel_count_matches_scan(pts):
    h = convex_hull(pts)
    xs, ys = zip(*pts)
    bbox = (min(xs), min(ys), max(xs), max(ys))
    assert hull_pixel_count(h, bbox) == brute_lattice_count(h.vertices.tolist(), bbox)
    assert hull_pixel_count(h, bbox) >= len(pts)


@pytest.mark.parametrize("seed", range(15))
def test_hull_count_equals_size_iff_digitally_convex(seed):
    rng = np.random.default_rng(100 + seed)
    region = region_from_mask(blob(rng, size=10))
    h = convex_hull(region)
    xmin, ymin, xmax, ymax = region.bbox
    lattice = {(x, y) for x in range(xmin, xmax + 1) for y in range(ymin, ymax + 1)
               if points_in_hull(h, [(x, y)])[0]}
    convex = lattice == region.pixel_set()
    assert (hull_pixel_count(h, region.bbox) == region.size) == convex


def test_digital_disk_is_convex():
    r = region_from_mask(disk(7))
    assert hull_pixel_count(convex_hull(r), r.bbox) == r.size


# -- ellipse -------------------------------------------------------------------

def _inside(fit, pts, slack=1e-7):
    a = fit.shape_matrix()
    d = np.asarray(pts, float) - np.asarray(fit.center)
    return np.einsum("ij,jk,ik->i", d, a, d) <= 1 + slack


def test_disk_ellipse_is_round():
    fit = min_enclosing_ellipse(region_from_mask(disk(10)).coords)
    assert fit.axis_ratio == pytest.approx(1.0, abs=0.05)


def test_rectangle_ellipse_matches_analytic_solution():
    region = region_from_mask(np.ones((5, 21), bool))
    fit = min_enclosing_ellipse(region)
    assert fit.axis_ratio == pytest.approx(0.2, abs=0.02)
    # the minimal ellipse of a w x h rectangle has semi-axes w/sqrt2, h/sqrt2
    assert fit.semi_major == pytest.approx(20 / math.sqrt(2), rel=1e-4)
    assert fit.semi_minor == pytest.approx(4 / math.sqrt(2), rel=1e-4)
    assert fit.center == pytest.approx((10, 2), abs=1e-6)
    assert abs(fit.orientation) < 1e-6


def test_thin_bar_uses_pixel_corners():
    fit = min_enclosing_ellipse(region_from_mask(np.ones((1, 9), bool)))
    assert fit.axis_ratio == pytest.approx(1 / 9, rel=1e-4)
    single = min_enclosing_ellipse([(3, 3)])
    assert single.axis_ratio == pytest.approx(1.0)
    assert single.semi_major == pytest.approx(math.sqrt(0.5))


def test_ellipse_argument_errors():
    with pytest.raises(ValueError):
        min_enclosing_ellipse(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        min_enclosing_ellipse([(0, 0)], tol=0)


def _minimality_witness(fit, pts, shrink):
    out = []
    for axis in ("semi_major", "semi_minor"):
        kw = {f: getattr(fit, f) for f in ("center", "semi_major", "semi_minor", "orientation")}
        kw[axis] *= 1 - shrink
        smaller = type(fit)(**kw)
        out.append(not _inside(smaller, pts, slack=0).all())
    return out


@given(point_sets)
def test_ellipse_encloses_and_is_tight(pts):
    fit = min_enclosing_ellipse(pts)
    assert 0 < fit.semi_minor <= fit.semi_major
    assert 0 < fit.axis_ratio <= 1
    hull = convex_hull(pts).vertices
    if len(hull) >= 3:
        assert _inside(fit, pts).all()
        assert all(_minimality_witness(fit, pts, 10e-6))


def test_ellipse_orientation_follows_major_axis():
    m = thick_segments(40, [((5, 5), (34, 34))], 2.0)
    fit = min_enclosing_ellipse(region_from_mask(m))
    # y points down, so the diagonal runs at +45 degrees in (x, y)
    assert fit.orientation == pytest.approx(math.pi / 4, abs=0.02)


# -- skeleton ----------------------------------------------------------------

def test_thin_bar_skeleton():
    m = np.ones((1, 9), bool)
    info = skeletonize(region_from_mask(m))
    assert count_endpoints(info) == 2
    assert len(info.skeleton) >= 7


def Y_shape():
    c = (30, 30)
    arms = [(c, (c[0] + 15 * math.cos(a), c[1] - 15 * math.sin(a)))
            for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3, math.pi / 2 + 4 * math.pi / 3)]
    return thick_segments(60, arms, 2.0)


def X_shape():
    return thick_segments(50, [((8, 8), (41, 41)), ((8, 41), (41, 8))], 2.5)


def annulus():
    return disk(12) & ~disk(6, pad=6)


@pytest.mark.parametrize("shape, expected", [
    (lambda: thick_segments(40, [((5, 20), (34, 20))], 2.0), 2),
    (Y_shape, 3),
    (X_shape, 4),
    (annulus, 0),
])
def test_endpoint_counts(shape, expected):
    assert count_endpoints(skeletonize(region_from_mask(shape()))) == expected


def test_disk_skeleton_collapses():
    info = skeletonize(region_from_mask(disk(6)))
    assert count_endpoints(info) <= 2
    assert len(info.skeleton) <= 5


def test_two_by_two_block_keeps_a_pixel():
    info = skeletonize(region_from_mask(np.ones((2, 2), bool), 5, 5))
    assert len(info.skeleton) == 1
    assert info.skeleton_set() <= {(5, 5), (6, 5), (5, 6), (6, 6)}


@pytest.mark.parametrize("seed", range(25))
def test_zhang_suen_matches_reference(seed):
    rng = np.random.default_rng(500 + seed)
    m = rng.random((16, 16)) < 0.6
    m = ndimage.binary_closing(m)
    assert np.array_equal(zhang_suen(m), reference_zhang_suen(m))


@pytest.mark.parametrize("seed", range(25))
def test_skeleton_invariants(seed):
    rng = np.random.default_rng(900 + seed)
    region = region_from_mask(blob(rng, size=18, p=0.6))
    info = skeletonize(region)
    skel = info.skeleton_set()
    assert skel <= region.pixel_set()
    grid = np.zeros((40, 40), bool)
    for x, y in skel:
        grid[y + 1, x + 1] = True
    assert ndimage.label(grid, EIGHT)[1] == 1
    for x, y in info.endpoint_set():
        nb = sum((x + dx, y + dy) in skel for dx in (-1, 0, 1) for dy in (-1, 0, 1) if dx or dy)
        assert nb == (1 if len(skel) > 1 else 0)


def test_boundary_type_len():
    assert len(Boundary(np.zeros((3, 2), int))) == 3

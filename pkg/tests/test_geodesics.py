import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alexsurf.errors import EmptySample, RadiusTooLarge
from alexsurf.geodesics import (
    SurfacePoint,
    distance_field,
    funnel,
    geodesic_circle_length,
    intrinsic_distance,
    sample_pairs,
    sample_surface_points,
    shortest_path_polyline,
    uniform_distance,
    vertex_point,
)
from alexsurf.mesh_core import cube_surface, double_triangle, regular_tetrahedron, square_torus
from oracles import cube_corner_distance, flat_torus_distance, torus_point
from strategies import barycentrics

CUBE = cube_surface()
TORUS = square_torus()


def corner(surface, xyz) -> SurfacePoint:
    v = int(np.argmin(np.linalg.norm(surface.positions - np.asarray(xyz, dtype=float), axis=1)))
    return vertex_point(surface, v)


def test_cube_opposite_corners_match_unfolding_oracle():
    oracle = cube_corner_distance()
    assert abs(oracle - math.sqrt(5.0)) < 1e-12
    d = intrinsic_distance(CUBE, corner(CUBE, (0, 0, 0)), corner(CUBE, (1, 1, 1)), level=3)
    assert abs(d - oracle) < 1e-6


def test_cube_face_diagonal():
    d = intrinsic_distance(CUBE, corner(CUBE, (0, 0, 0)), corner(CUBE, (1, 1, 0)))
    assert abs(d - math.sqrt(2.0)) < 1e-12


def test_torus_half_diagonal():
    # face 0 has corners (0,0), (1,0), (1,1) in the unit square
    x = SurfacePoint.at_corner(0, 0)
    centre = SurfacePoint(0, (0.5, 0.0, 0.5))
    side_mid = SurfacePoint(0, (0.0, 0.5, 0.5))
    assert abs(intrinsic_distance(TORUS, x, centre) - math.sqrt(2.0) / 2) < 1e-9
    assert abs(intrinsic_distance(TORUS, x, side_mid) - 0.5) < 1e-9


def test_same_point_is_zero():
    p = SurfacePoint(3, (0.2, 0.3, 0.5))
    assert intrinsic_distance(CUBE, p, p) == 0.0


def test_flat_torus_against_lattice_oracle(rng):
    for _ in range(25):
        fa, fb = rng.integers(0, 2, size=2)
        ba, bb = rng.dirichlet([1, 1, 1], size=2)
        d = intrinsic_distance(TORUS, SurfacePoint(int(fa), tuple(ba)), SurfacePoint(int(fb), tuple(bb)))
        ref = flat_torus_distance(torus_point(fa, ba), torus_point(fb, bb))
        assert abs(d - ref) <= 1e-9 + 1e-12 * ref


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 11), barycentrics, st.integers(0, 11), barycentrics)
def test_symmetry(f1, b1, f2, b2):
    x, y = SurfacePoint(f1, b1), SurfacePoint(f2, b2)
    assert abs(intrinsic_distance(CUBE, x, y) - intrinsic_distance(CUBE, y, x)) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 11), barycentrics), min_size=3, max_size=3))
def test_triangle_inequality(pts):
    x, y, z = (SurfacePoint(f, b) for f, b in pts)
    d = lambda a, b: intrinsic_distance(CUBE, a, b)
    assert d(x, z) <= d(x, y) + d(y, z) + 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 3), barycentrics, st.integers(0, 3), barycentrics)
def test_monotone_refinement(f1, b1, f2, b2):
    s = regular_tetrahedron()
    x, y = SurfacePoint(f1, b1), SurfacePoint(f2, b2)
    vals = [intrinsic_distance(s, x, y, level) for level in range(5)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 11), barycentrics, st.integers(0, 11), barycentrics, st.floats(0.1, 10.0))
def test_homothety(f1, b1, f2, b2, lam):
    x, y = SurfacePoint(f1, b1), SurfacePoint(f2, b2)
    d = intrinsic_distance(CUBE, x, y)
    dl = intrinsic_distance(CUBE.scaled(lam), x, y)
    assert abs(dl - lam * d) <= 1e-12 * max(1.0, lam * d)


def test_distance_field_bounds_point_queries():
    x = corner(CUBE, (0, 0, 0))
    fld = distance_field(CUBE, x, level=3)
    for p in sample_surface_points(CUBE, 10, seed=2):
        assert fld(p) >= intrinsic_distance(CUBE, x, p) - 1e-12


def test_shortest_path_polyline_on_cube():
    x, y = corner(CUBE, (0, 0, 0)), corner(CUBE, (1, 1, 1))
    d, poly = shortest_path_polyline(CUBE, x, y)
    assert abs(d - math.sqrt(5.0)) < 1e-9
    np.testing.assert_allclose(poly[0], [0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(poly[-1], [1, 1, 1], atol=1e-12)
    length = np.linalg.norm(np.diff(poly, axis=0), axis=1).sum()
    assert abs(length - d) < 1e-9


def test_funnel_straight_corridor():
    pts = funnel(np.array([0.0, 0.0]), [(np.array([1.0, 1.0]), np.array([1.0, -1.0]))], np.array([2.0, 0.0]))
    assert len(pts) == 2


def test_funnel_bends_around_a_corner():
    portal = (np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    pts = funnel(np.array([0.0, 0.0]), [portal], np.array([2.0, 0.0]))
    assert len(pts) == 3
    np.testing.assert_allclose(pts[1], [1.0, 1.0])


def test_uniform_distance_examples():
    d1 = lambda x, y: intrinsic_distance(CUBE, x, y)
    d2 = lambda x, y: 2.0 * d1(x, y)
    pts = sample_surface_points(CUBE, 12, seed=0)
    pairs = sample_pairs(pts, 10, seed=0)
    assert uniform_distance(d1, d1, pairs) == 0.0
    diameter = math.sqrt(5.0) + 1e-9
    assert uniform_distance(d1, d2, pairs) <= diameter
    with pytest.raises(EmptySample):
        uniform_distance(d1, d1, [])


def test_uniform_distance_is_a_pseudometric():
    pts = sample_surface_points(TORUS, 10, seed=1)
    pairs = sample_pairs(pts, 8, seed=1)
    cache = {(x, y): intrinsic_distance(TORUS, x, y) for x, y in pairs}
    base = lambda x, y: cache[x, y]
    ds = [base, lambda x, y: 1.1 * base(x, y), lambda x, y: base(x, y) + 0.05]
    u = lambda a, b: uniform_distance(a, b, pairs)
    for a in ds:
        for b in ds:
            assert u(a, b) == u(b, a)
            for c in ds:
                assert u(a, c) <= u(a, b) + u(b, c) + 1e-12


def test_samples_are_seeded():
    a = sample_surface_points(CUBE, 5, seed=3)
    b = sample_surface_points(CUBE, 5, seed=3)
    assert a == b


def test_circle_length_flat_point():
    r = 0.1
    L = geodesic_circle_length(TORUS, SurfacePoint(0, (0.2, 0.5, 0.3)), r, n_rays=64)
    assert abs(L / (2 * math.pi * r) - 1) < 0.01


def test_circle_length_cube_vertex():
    r = 0.1
    L = geodesic_circle_length(CUBE, corner(CUBE, (0, 0, 0)), r, n_rays=64)
    assert abs(L / (1.5 * math.pi * r) - 1) < 0.02


def test_circle_length_double_triangle_vertex():
    s = double_triangle()
    r = 0.05
    L = geodesic_circle_length(s, vertex_point(s, 0), r, n_rays=64)
    assert abs(L / (2 * math.pi / 3 * r) - 1) < 0.02


def test_circle_radius_too_large():
    with pytest.raises(RadiusTooLarge):
        geodesic_circle_length(CUBE, corner(CUBE, (0, 0, 0)), 0.6)


def test_sample_pairs_count_and_distinctness():
    from alexsurf.geodesics import sample_pairs

    pts = list(range(3))
    pairs = sample_pairs(pts, 50, seed=2)
    assert len(pairs) == 50
    assert all(a != b for a, b in pairs)

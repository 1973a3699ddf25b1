import math

import numpy as np
import pytest

from alexsurf.convergence import (
    ConvergenceTable,
    DictionaryFunction,
    LanternSpec,
    lantern_mesh,
    lantern_table,
    make_dictionary,
    mollify_atom,
    mollify_measure,
    reshetnyak_experiment,
    schwarz_lantern,
    surface_area,
    weak_distance,
    weak_distance_table,
)
from alexsurf.errors import BadParameter, CuspAtom, EmptyDictionary, EpsilonTooLarge
from alexsurf.mesh_core import euler_characteristic, surface_from_positions
from alexsurf.potential import SPHERE, TORUS, PrescribedMeasure, UniformPart, one_cone_torus_measure

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------- lanterns

def test_smallest_lantern_is_an_annulus():
    s = schwarz_lantern(LanternSpec(3, 1))
    assert s.combinatorics.n_faces == 6
    assert euler_characteristic(s.combinatorics) == 0


def test_lantern_vertices_lie_on_the_cylinder():
    pts, faces = lantern_mesh(LanternSpec(7, 4, r=1.5, h=2.0))
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.5, atol=1e-14)
    assert pts[:, 2].min() == 0.0 and pts[:, 2].max() == 2.0
    assert faces.shape == (2 * 7 * 4, 3)


def test_lantern_area_by_cross_products():
    pts, faces = lantern_mesh(LanternSpec(9, 5))
    a, b, c = (pts[faces[:, k]] for k in range(3))
    ref = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum()
    assert abs(surface_area(schwarz_lantern(LanternSpec(9, 5))) - ref) < 1e-12


def test_area_invariant_under_face_relabeling(rng):
    pts, faces = lantern_mesh(LanternSpec(8, 6))
    perm = rng.permutation(len(faces))
    rolled = np.roll(faces[perm], 1, axis=1)
    a0 = surface_area(surface_from_positions(pts, faces))
    assert abs(surface_area(surface_from_positions(pts, rolled)) - a0) < 1e-12


def test_equal_rows_converge():
    t = lantern_table(1.0, 1.0, [8, 16, 32, 64], "equal")
    err = np.abs(t.column("error"))
    # every interior vertex carries six angles summing to 2 pi: the lantern is intrinsically flat
    assert np.all(t.column("max_atom") < 1e-12)
    assert np.all(np.diff(err) < 0)
    assert err[-1] / TWO_PI < 5e-3
    assert np.all(np.abs(t.column("gauss_bonnet_residual")) < 1e-9)


def test_cube_rows_diverge():
    t = lantern_table(1.0, 1.0, [4, 8, 16], "cube")
    assert t.strictly_increasing("area")
    assert t.column("area")[-1] > 10 * TWO_PI
    assert np.all(np.abs(t.column("gauss_bonnet_residual")) < 1e-9)


def test_unknown_row_rule():
    with pytest.raises(BadParameter):
        lantern_table(1.0, 1.0, [4], "square")


@pytest.mark.parametrize("args", [(2, 1), (3, 0), (3.5, 2), (4, 2, -1.0, 1.0), (4, 2, 1.0, 0.0)])
def test_bad_lantern_spec(args):
    with pytest.raises(BadParameter):
        LanternSpec(*args)


def test_table_csv():
    t = ConvergenceTable("n", ("area",), [(4.0, 1.0 / 3.0), (8.0, 2.0)])
    assert t.to_csv() == "n,area\n4,0.333333333\n8,2\n"
    assert t.flags() == {"area": {"strictly_increasing": True, "strictly_decreasing": False}}


# ---------------------------------------------------------------- mollification

@pytest.mark.parametrize("bg, site", [(SPHERE, (0.0, 0.0, 1.0)), (TORUS, (0.5, 0.5))], ids=["sphere", "torus"])
def test_mollified_atom_keeps_mass(bg, site):
    mu = mollify_atom(bg, site, 1.2, 0.2)
    assert abs(mu.total_mass - 1.2) < 1e-12
    assert mu.atoms == ()


def test_zero_mass_mollifies_to_nothing():
    mu = mollify_atom(TORUS, (0.5, 0.5), 0.0, 0.2)
    assert mu.atoms == () and mu.smooth == ()


def test_mollification_guards():
    with pytest.raises(EpsilonTooLarge):
        mollify_atom(TORUS, (0.5, 0.5), 1.0, 0.3)
    with pytest.raises(BadParameter):
        mollify_atom(TORUS, (0.5, 0.5), 1.0, 0.0)
    with pytest.raises(CuspAtom):
        mollify_atom(SPHERE, (0.0, 0.0, 1.0), TWO_PI, 0.2)


def test_mollify_measure_keeps_smooth_parts():
    omega = one_cone_torus_measure(math.pi)
    moll = mollify_measure(omega, 0.125)
    assert moll.atoms == ()
    assert abs(moll.total_mass - omega.total_mass) < 1e-12


# ---------------------------------------------------------------- weak distance

def test_dictionary_size_and_norms():
    for bg in (SPHERE, TORUS):
        d = make_dictionary(bg, seed=1)
        assert len(d) == 32
        pts = bg.sample(400, seed=2)
        for f in d:
            assert np.max(np.abs(f(pts))) <= f.sup + 1e-12


def test_dictionary_lipschitz_bounds(rng):
    for bg in (SPHERE, TORUS):
        pts = bg.sample(600, seed=3)
        a, b = pts[:300], pts[300:]
        dist = bg.distance(a, b)
        for f in make_dictionary(bg, seed=1):
            assert np.all(np.abs(f(a) - f(b)) <= f.lip * dist + 1e-12)


def test_weak_distance_of_equal_measures_is_zero():
    omega = one_cone_torus_measure(math.pi)
    assert weak_distance(omega, omega, make_dictionary(TORUS)) == 0.0


def test_weak_distance_of_shifted_atoms():
    delta, m = 0.01, 0.7
    a = PrescribedMeasure(TORUS, (((0.3, 0.3), m),))
    b = PrescribedMeasure(TORUS, (((0.3 + delta, 0.3), m),))
    assert 0 < weak_distance(a, b, make_dictionary(TORUS)) <= m * delta


def test_empty_dictionary():
    omega = one_cone_torus_measure(math.pi)
    with pytest.raises(EmptyDictionary):
        weak_distance(omega, omega, [])


def test_single_function_dictionary():
    f = DictionaryFunction("x", lambda p: np.cos(TWO_PI * p[:, 0]), 1.0, TWO_PI)
    a = PrescribedMeasure(TORUS, (((0.0, 0.3), 1.0),))
    b = PrescribedMeasure(TORUS, (((0.5, 0.3), 1.0),))
    assert abs(weak_distance(a, b, [f]) - 2.0 / (1.0 + TWO_PI)) < 1e-12


def test_weak_distance_table_decreases():
    t = weak_distance_table(one_cone_torus_measure(math.pi), [0.25, 0.125, 0.0625])
    assert t.strictly_decreasing("weak_distance")
    assert t.manifest["experiment"] == "weak-distance"


def test_reshetnyak_without_atoms_is_trivial():
    omega = PrescribedMeasure(SPHERE, (), (UniformPart(4 * math.pi),))
    t = reshetnyak_experiment(SPHERE, omega, [0.25, 0.125], n_pairs=4, resolution=3)
    np.testing.assert_allclose(t.column("uniform_distance"), 0.0, atol=1e-12)
    np.testing.assert_allclose(t.column("weak_distance"), 0.0, atol=1e-12)


def test_reshetnyak_is_deterministic():
    omega = one_cone_torus_measure(math.pi)
    a = reshetnyak_experiment(TORUS, omega, [0.25], n_pairs=4, seed=3, resolution=16)
    b = reshetnyak_experiment(TORUS, omega, [0.25], n_pairs=4, seed=3, resolution=16)
    assert a.to_csv() == b.to_csv()
    assert a.manifest == b.manifest

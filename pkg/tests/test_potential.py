import json
import math

import mpmath
import numpy as np
import pytest
from scipy.special import i0, roots_legendre

from alexsurf.conformal import conformal_distance
from alexsurf.errors import (
    BadParameter,
    CoincidentPoints,
    CuspAtom,
    GaussBonnetViolation,
    NonZeroTotalMass,
    ResolutionTooLow,
    TruncationNotConverged,
)
from alexsurf.potential import (
    SPHERE,
    TORUS,
    BumpPart,
    DensityPart,
    PrescribedMeasure,
    UniformPart,
    build_alexandrov_metric,
    cone_angle_probe,
    ewald_tail_bound,
    football_measure,
    green,
    green_sphere,
    green_torus,
    grid_density,
    integrate_over,
    load_measure,
    metric_distance,
    one_cone_torus_measure,
    potential_of_measure,
    torus_green_fast,
    verify_metric,
)

TWO_PI = 2 * math.pi
NORTH, SOUTH = np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])


def theta_green(x: float, y: float) -> float:
    """Zero-mean Green function of the unit square torus from Jacobi's theta_1."""
    with mpmath.workdps(30):
        q = mpmath.exp(-mpmath.pi)
        eta = mpmath.exp(-mpmath.pi / 12) * mpmath.qp(q ** 2)
        z = mpmath.mpf(x) + 1j * mpmath.mpf(y)
        val = -mpmath.log(abs(mpmath.jtheta(1, mpmath.pi * z, q) / eta)) / (2 * mpmath.pi) + mpmath.mpf(y) ** 2 / 2
        return float(val)


# ---------------------------------------------------------------- Green functions

def test_sphere_green_antipodal_value():
    assert abs(float(green_sphere(NORTH, SOUTH)) + 1 / (4 * math.pi)) < 1e-15


def test_sphere_green_zero_mean():
    for x in SPHERE.sample(3, seed=4):
        assert abs(integrate_over(SPHERE, lambda y: green_sphere(x, y), [x])) < 1e-6


def test_torus_green_against_theta_oracle(rng):
    for x, y in rng.random((8, 2)):
        assert abs(float(green_torus(np.array([x, y]), np.zeros(2)).item()) - theta_green(x, y)) < 1e-10


def test_torus_green_translation_invariance(rng):
    for _ in range(20):
        x, y, t = rng.random((3, 2))
        assert abs(float(green_torus(x + t, y + t).item()) - float(green_torus(x, y).item())) < 1e-12


def test_torus_green_zero_mean():
    n = 256
    g = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    x = np.array([0.3, 0.7])
    assert abs(integrate_over(TORUS, lambda y: green_torus(x, y), [x])) < 1e-8


@pytest.mark.parametrize("bg", [SPHERE, TORUS], ids=lambda b: b.kind)
def test_green_symmetry(bg, rng):
    x, y = bg.sample(200, seed=5)[:100], bg.sample(200, seed=5)[100:]
    np.testing.assert_allclose(green(bg, x, y), green(bg, y, x), rtol=0, atol=1e-12)


@pytest.mark.parametrize("bg", [SPHERE, TORUS], ids=lambda b: b.kind)
def test_green_log_bound(bg):
    x = bg.sample(1, seed=6)[0]
    d = np.logspace(-6, -1, 30)
    y = bg.exp(x, d, np.full(d.size, 0.7))
    h = green(bg, np.repeat(x[None, :], d.size, axis=0), y) + np.log(d) / TWO_PI
    assert np.ptp(h) < 1e-2
    assert np.all(np.abs(h) < 1.0)


def test_coincident_points():
    with pytest.raises(CoincidentPoints):
        green_sphere(NORTH, NORTH)
    with pytest.raises(CoincidentPoints):
        green_torus(np.array([0.2, 0.3]), np.array([1.2, -0.7]))


def test_ewald_truncation():
    assert ewald_tail_bound(3) < 1e-10
    for reach in (1, 2):
        with pytest.raises(TruncationNotConverged):
            green_torus(np.array([0.2, 0.3]), np.zeros(2), reach=reach)


def test_fast_torus_kernel(rng):
    d = rng.random((500, 2)) - 0.5
    d = d[np.hypot(d[:, 0], d[:, 1]) > 1e-3]
    exact = green_torus(d, np.zeros(2))
    np.testing.assert_allclose(torus_green_fast(d[:, 0], d[:, 1]), exact, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- measures

@pytest.mark.parametrize("bg, site", [(SPHERE, (0.6, 0.0, 0.8)), (TORUS, (0.3, 0.9))], ids=["sphere", "torus"])
def test_bump_mass_by_exact_polar_rule(bg, site):
    bump = BumpPart(site, 1.3, 0.2)
    # Gauss-Legendre in the radial parameter v, where the density is a cubic
    # and the area element is constant, times an angular rule
    x, w = roots_legendre(8)
    v = 0.5 * (x + 1)
    w = 0.5 * w
    phi = TWO_PI * np.arange(16) / 16
    V, P = np.meshgrid(v, phi, indexing="ij")
    if bg.kind == "sphere":
        kappa = 1 - math.cos(0.2)
        r = np.arccos(1 - kappa * V)
        jac = kappa  # dA = kappa dv dphi
    else:
        r = 0.2 * np.sqrt(V)
        jac = 0.2 ** 2 / 2
    pts = bg.exp(np.asarray(site), r.ravel(), P.ravel())
    dens = bump.density(bg, pts).reshape(V.shape)
    mass = jac * (TWO_PI / 16) * float(np.sum(w[:, None] * dens))
    assert abs(mass - 1.3) < 1e-9


def polar_rule(bg, site, epsilon, n_v=40, n_phi=128):
    """Points and weights of a tensor rule on the ball of radius epsilon, Gauss-Legendre in v."""
    x, w = roots_legendre(n_v)
    v, w = 0.5 * (x + 1), 0.5 * w
    phi = TWO_PI * np.arange(n_phi) / n_phi
    V, P = np.meshgrid(v, phi, indexing="ij")
    if bg.kind == "sphere":
        kappa = 1 - math.cos(epsilon)
        r, jac = np.arccos(1 - kappa * V), kappa
    else:
        r, jac = epsilon * np.sqrt(V), epsilon ** 2 / 2
    pts = bg.exp(np.asarray(site, dtype=float), r.ravel(), P.ravel())
    return pts, np.repeat(w, n_phi) * jac * TWO_PI / n_phi


@pytest.mark.parametrize("bg, site", [(SPHERE, (0.0, 0.6, 0.8)), (TORUS, (0.4, 0.4))], ids=["sphere", "torus"])
def test_bump_potential_matches_quadrature(bg, site):
    bump = BumpPart(site, 1.3, 0.25)
    ys, w = polar_rule(bg, site, 0.25)
    rho = bump.density(bg, ys) * w
    # outside the support the kernel is smooth and the rule converges fast
    pts = np.vstack([bg.sample(12, seed=7), bg.exp(np.asarray(site), np.array([0.3, 0.45]), np.array([0.3, 1.0]))])
    pts = pts[bg.distance(pts, np.asarray(site)) > 0.3]
    ref = np.array([np.sum(rho * green(bg, np.repeat(p[None], len(ys), 0), ys)) for p in pts])
    np.testing.assert_allclose(bump.potential(bg, pts), ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("bg, site", [(SPHERE, (0.0, 0.6, 0.8)), (TORUS, (0.4, 0.4))], ids=["sphere", "torus"])
def test_bump_potential_is_continuous_at_the_site(bg, site):
    bump = BumpPart(site, 1.3, 0.25)
    s = np.asarray(site, dtype=float)
    near = bg.exp(s, np.array([1e-6, 1e-7]), np.array([0.4, 2.0]))
    vals = bump.potential(bg, np.vstack([s[None], near]))
    assert np.ptp(vals) < 1e-9


def test_measure_json_round_trip(tmp_path):
    data = np.full((8, 8), 0.25)
    mu = PrescribedMeasure(TORUS, (((0.1, 0.2), 0.5),), (grid_density(TORUS, data), BumpPart((0.5, 0.5), 0.2, 0.1), UniformPart(-0.95)))
    path = tmp_path / "mu.json"
    path.write_text(json.dumps(mu.to_dict()))
    back = load_measure(path)
    assert back.to_dict() == mu.to_dict()
    assert abs(back.total_mass - mu.total_mass) < 1e-12
    assert abs(mu.total_mass - (0.5 + 0.25 + 0.2 - 0.95)) < 1e-9


def test_function_density_cannot_be_serialised():
    mu = PrescribedMeasure(TORUS, (), (DensityPart(lambda p: np.ones(len(p))),))
    with pytest.raises(BadParameter):
        mu.to_dict()


def test_malformed_measure():
    with pytest.raises(BadParameter):
        PrescribedMeasure.from_dict({"background": "torus", "atoms": [{"mass": 1.0}]})
    with pytest.raises(BadParameter):
        PrescribedMeasure.from_dict({"background": "torus", "smooth": {"kind": "spline"}})


# ---------------------------------------------------------------- potentials

def test_zero_measure_has_zero_potential():
    u = potential_of_measure(SPHERE, PrescribedMeasure(SPHERE))
    assert np.all(u(SPHERE.sample(5)) == 0.0)


def test_dipole_is_linear_in_the_kernel():
    p, q = np.array([0.2, 0.3]), np.array([0.7, 0.6])
    mu = PrescribedMeasure(TORUS, ((p, 1.5), (q, -1.5)))
    x = TORUS.sample(10, seed=8)
    u = potential_of_measure(TORUS, mu)
    np.testing.assert_allclose(u(x), 1.5 * (green_torus(x, p) - green_torus(x, q)), atol=1e-12)


def test_football_potential_is_axially_symmetric():
    mu = PrescribedMeasure(SPHERE, ((NORTH, math.pi), (SOUTH, math.pi)), (UniformPart(-TWO_PI),))
    u = potential_of_measure(SPHERE, mu)
    z = np.linspace(-0.9, 0.9, 7)
    for phi in (0.3, 1.7, 4.0):
        s = np.sqrt(1 - z ** 2)
        pts = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
        ref = np.stack([s, 0 * s, z], axis=1)
        np.testing.assert_allclose(u(pts), u(ref), atol=1e-8)


def test_nonzero_total_mass():
    with pytest.raises(NonZeroTotalMass):
        potential_of_measure(TORUS, PrescribedMeasure(TORUS, (((0.5, 0.5), 1.0),)))


def test_cusp_atom():
    mu = PrescribedMeasure(TORUS, (((0.5, 0.5), TWO_PI),), (UniformPart(-TWO_PI),))
    with pytest.raises(CuspAtom):
        potential_of_measure(TORUS, mu)
    with pytest.raises(CuspAtom):
        build_alexandrov_metric(TORUS, mu)


SPHERE_PHIS = [
    (lambda p: p[:, 0], 2), (lambda p: p[:, 1], 2), (lambda p: p[:, 2], 2), (lambda p: p[:, 0] * p[:, 1], 6),
    (lambda p: p[:, 0] * p[:, 2], 6), (lambda p: 3 * p[:, 2] ** 2 - 1, 6), (lambda p: p[:, 0] ** 2 - p[:, 1] ** 2, 6),
    (lambda p: p[:, 2] * (5 * p[:, 2] ** 2 - 3), 12),
]
TORUS_PHIS = [
    (lambda p, k=k: np.cos(TWO_PI * (k[0] * p[:, 0] + k[1] * p[:, 1]) + k[2]), TWO_PI ** 2 * (k[0] ** 2 + k[1] ** 2))
    for k in [(1, 0, 0.0), (0, 1, math.pi / 2), (1, 1, 0.0), (1, -1, 0.3), (2, 0, 0.0), (1, 2, 1.0), (2, -1, 0.0), (0, 2, -0.7)]
]
WEAK_CASES = {
    "sphere-football": (SPHERE, PrescribedMeasure(SPHERE, ((NORTH, math.pi), (SOUTH, math.pi)), (UniformPart(-TWO_PI),)), SPHERE_PHIS),
    "torus-dipole": (TORUS, PrescribedMeasure(TORUS, (((0.2, 0.3), 1.0), ((0.7, 0.6), -1.0))), TORUS_PHIS),
    "torus-bump": (TORUS, PrescribedMeasure(TORUS, (), (BumpPart((0.4, 0.4), 1.3, 0.2), UniformPart(-1.3))), TORUS_PHIS),
}


def weak_laplace_errors(bg, mu, phis) -> list[float]:
    """|int u Lap(phi) dA - int (phi - mean phi) dmu| for eigenfunctions phi (Lap phi = lam phi, mean 0)."""
    u = potential_of_measure(bg, mu)
    out = []
    for phi, lam in phis:
        lhs = integrate_over(bg, lambda p: u(p) * lam * phi(p), u.singular_points)
        out.append(abs(lhs - mu.integrate(phi)))
    return out


@pytest.mark.parametrize("case", list(WEAK_CASES))
def test_weak_laplace_identity(case):
    assert max(weak_laplace_errors(*WEAK_CASES[case])) < 1e-5


ROUND_TRIPS = {
    "torus-exp-cos": (
        TORUS,
        lambda p: np.exp(np.cos(TWO_PI * p[:, 0])),
        lambda p: TWO_PI ** 2 * np.exp(np.cos(TWO_PI * p[:, 0])) * (np.cos(TWO_PI * p[:, 0]) - np.sin(TWO_PI * p[:, 0]) ** 2),
        float(i0(1.0)),
    ),
    "torus-mode": (
        TORUS,
        lambda p: np.sin(TWO_PI * p[:, 0]) * np.cos(2 * TWO_PI * p[:, 1]),
        lambda p: 5 * TWO_PI ** 2 * np.sin(TWO_PI * p[:, 0]) * np.cos(2 * TWO_PI * p[:, 1]),
        0.0,
    ),
    "sphere-exp-z": (
        SPHERE,
        lambda p: np.exp(p[:, 2]),
        lambda p: (2 * p[:, 2] - (1 - p[:, 2] ** 2)) * np.exp(p[:, 2]),
        math.sinh(1.0),
    ),
}


def round_trip_error(bg, u0, lap_u0, mean_u0) -> float:
    u = potential_of_measure(bg, PrescribedMeasure(bg, (), (DensityPart(lap_u0),)))
    x = bg.sample(20, seed=3)
    return float(np.max(np.abs(u(x) - (u0(x) - mean_u0))))


@pytest.mark.parametrize("case", list(ROUND_TRIPS))
def test_green_round_trip(case):
    assert round_trip_error(*ROUND_TRIPS[case]) < 1e-5


# ---------------------------------------------------------------- metrics

def test_round_sphere_has_zero_factor():
    omega = PrescribedMeasure(SPHERE, (), (UniformPart(4 * math.pi),))
    metric = build_alexandrov_metric(SPHERE, omega)
    x = SPHERE.sample(5, seed=1)
    np.testing.assert_allclose(metric.u(x), 0.0, atol=1e-15)


def test_gauss_bonnet_violation():
    with pytest.raises(GaussBonnetViolation):
        build_alexandrov_metric(SPHERE, PrescribedMeasure(SPHERE, (), (UniformPart(3.0),)))
    with pytest.raises(GaussBonnetViolation):
        build_alexandrov_metric(TORUS, PrescribedMeasure(TORUS, (((0.5, 0.5), 1.0),)))


def test_background_distances():
    flat = build_alexandrov_metric(SPHERE, football_measure(TWO_PI))
    x, y = SPHERE.sample(2, seed=9)
    exact = float(SPHERE.distance(x, y))
    assert abs(metric_distance(flat, x, y, resolution=5) / exact - 1) < 0.01
    torus = build_alexandrov_metric(TORUS, PrescribedMeasure(TORUS))
    assert abs(metric_distance(torus, (0.0, 0.0), (0.5, 0.5)) - math.sqrt(0.5)) < 0.01 * math.sqrt(0.5)


def test_resolution_too_low():
    torus = build_alexandrov_metric(TORUS, PrescribedMeasure(TORUS))
    with pytest.raises(ResolutionTooLow):
        metric_distance(torus, (0.0, 0.0), (0.5, 0.5), resolution=4)


def test_football_distance_matches_cone_chart():
    metric = build_alexandrov_metric(SPHERE, football_measure(math.pi))
    d_graph = metric_distance(metric, NORTH, SOUTH)
    d_chart = conformal_distance(metric.chart_metric(), 0j, complex("inf"), n=32)
    assert abs(d_graph / d_chart - 1) < 0.02


def test_separation():
    metric = build_alexandrov_metric(TORUS, one_cone_torus_measure(math.pi))
    pts = TORUS.sample(8, seed=11)
    for a, b in zip(pts[::2], pts[1::2]):
        assert metric_distance(metric, a, b, resolution=32) > 0


def test_adding_a_constant_scales_distances():
    metric = build_alexandrov_metric(SPHERE, football_measure(math.pi))
    c = 0.3
    pts = SPHERE.sample(4, seed=12)
    for a, b in zip(pts[::2], pts[1::2]):
        d0 = metric_distance(metric, a, b, resolution=3)
        d1 = metric_distance(metric.shifted(c), a, b, resolution=3)
        assert abs(d1 / (math.exp(c) * d0) - 1) < 1e-9


def test_one_cone_torus():
    m = math.pi
    metric = build_alexandrov_metric(TORUS, one_cone_torus_measure(m))
    theta = cone_angle_probe(metric, np.array([0.5, 0.5]))
    assert abs(theta / (TWO_PI - m) - 1) < 0.02


def test_verify_metric_smooth_density_converges():
    metric = build_alexandrov_metric(TORUS, one_cone_torus_measure(math.pi))
    errs = [verify_metric(metric, n_rays=8, n_grid=n)["smooth_density_error"] for n in (24, 48, 96)]
    slopes = -np.diff(np.log(errs)) / math.log(2.0)
    assert np.all(slopes > 1.5)
    assert errs[-1] < 0.01 * math.pi

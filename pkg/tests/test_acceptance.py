"""Acceptance suite: one pass/fail line per criterion.

Each test records ``criterion n: PASS|FAIL ...`` with the measured values
and the runtime; the lines are printed in order at the end of the pytest
run. ``python3 tests/test_acceptance.py`` runs the suite on its own.
"""

import math
import time

import numpy as np

import acceptance_log
from alexsurf.conformal import ChartProbe, conformal_distance, make_example_metric
from alexsurf.convergence import lantern_table, reshetnyak_experiment
from alexsurf.curvature import gauss_bonnet_residual, tin_can_measure, vertex_curvature_atoms
from alexsurf.geodesics import SurfacePoint, geodesic_circle_length, intrinsic_distance, vertex_point
from alexsurf.mesh_core import cube_surface, square_torus
from alexsurf.potential import (
    SPHERE,
    TORUS,
    build_alexandrov_metric,
    cone_angle_probe,
    football_measure,
    green,
    green_sphere,
    green_torus,
    integrate_over,
    metric_distance,
    one_cone_torus_measure,
    verify_metric,
)
from oracles import cube_corner_distance, flat_torus_distance, torus_point
from test_potential import ROUND_TRIPS, WEAK_CASES, round_trip_error, weak_laplace_errors

TWO_PI = 2 * math.pi


class Criterion:
    """Times a block, then logs one line and asserts the outcome and the time limit."""

    def __init__(self, n: int, title: str, limit: float):
        self.n, self.title, self.limit = n, title, limit
        self.checks: list[tuple[bool, str]] = []

    def check(self, ok: bool, detail: str) -> None:
        self.checks.append((bool(ok), detail))

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.check(False, f"raised {exc_type.__name__}: {exc}")
        self.check(elapsed < self.limit, f"{elapsed:.2f} s < {self.limit:g} s")
        ok = all(c for c, _ in self.checks)
        failed = [d for c, d in self.checks if not c]
        shown = failed if failed else [d for _, d in self.checks]
        line = f"criterion {self.n}: {'PASS' if ok else 'FAIL'} {self.title} ({'; '.join(shown)})"
        acceptance_log.LINES.append((self.n, line))
        print(line)
        if exc_type is None:
            assert ok, line
        return False


def test_criterion_1_cube_gauss_bonnet():
    with Criterion(1, "cube Gauss-Bonnet", 1.0) as c:
        mu = vertex_curvature_atoms(cube_surface())
        dev = float(np.max(np.abs(mu.atom_masses - math.pi / 2)))
        res = gauss_bonnet_residual(mu, 2)
        c.check(len(mu.atoms) == 8, f"{len(mu.atoms)} atoms")
        c.check(dev < 1e-12, f"max |atom - pi/2| = {dev:.2e}")
        c.check(abs(mu.total_mass - 4 * math.pi) < 1e-12, f"total {mu.total_mass:.12f}")
        c.check(abs(res) < 1e-12, f"residual {res:.2e}")


def test_criterion_2_tin_can():
    with Criterion(2, "tin-can measure", 1.0) as c:
        for r, h in ((1.0, 1.0), (0.7, 2.0), (2.5, 0.3)):
            mu = tin_can_measure(r, h)
            rims = list(mu.edges)
            rim_total = sum(e.mass for e in rims)
            c.check(len(rims) == 2 and all(abs(e.density - 1 / r) < 1e-15 and abs(e.length - TWO_PI * r) < 1e-12 for e in rims),
                    f"r={r}: two rims of density 1/r and length 2 pi r")
            c.check(abs(rim_total - 4 * math.pi) < 1e-12 and abs(mu.total_mass - 4 * math.pi) < 1e-12,
                    f"r={r}: total {mu.total_mass:.12f}")


def test_criterion_3_glued_disks():
    with Criterion(3, "glued disks", 30.0) as c:
        m = make_example_metric("glued_disks")
        rim = m.measure.edges[0]
        c.check(rim.density == 2.0 and abs(m.measure.total_mass - 4 * math.pi) < 1e-12, f"density {rim.density}, total {m.measure.total_mass:.12f}")
        ds = [conformal_distance(m, 0, complex("inf"), n=n) for n in (16, 32, 64)]
        c.check(all(abs(d / 2 - 1) < 0.01 for d in ds), "d(0, inf) = " + ", ".join(f"{d:.6f}" for d in ds) + " at n = 16, 32, 64")
        c.check(ds[1] <= ds[0] + 1e-12 and ds[2] <= ds[1] + 1e-12, "non-increasing under refinement")


def test_criterion_4_cone_chain():
    with Criterion(4, "cone identity chain", 60.0) as c:
        for theta, name in ((math.pi / 2, "pi/2"), (math.pi, "pi"), (1.5 * math.pi, "3pi/2")):
            m = make_example_metric("cone", theta=theta)
            beta = theta / TWO_PI - 1
            z = 0.8 + 0.3j
            exact = abs(z) ** (beta + 1) / (beta + 1)
            d = conformal_distance(m, 0, z, n=64)
            c.check(abs(d / exact - 1) < 0.01, f"theta={name}: apex distance rel err {d / exact - 1:.1e}")
            r = 0.3
            probe = geodesic_circle_length(ChartProbe(m, n=64), 0j, r, n_rays=32) / r
            c.check(abs(probe / theta - 1) < 0.02, f"theta={name}: probe rel err {probe / theta - 1:.1e}")


def test_criterion_5_lanterns():
    with Criterion(5, "Schwarz lanterns", 60.0) as c:
        eq = lantern_table(1.0, 1.0, [8, 16, 32, 64], "equal")
        err = abs(eq.column("area")[-1] / TWO_PI - 1)
        c.check(err < 5e-3, f"m=n: n=64 area rel err {err:.2e}")
        cube = lantern_table(1.0, 1.0, [4, 8, 16, 32], "cube")
        ratio = cube.column("area")[-1] / TWO_PI
        c.check(cube.strictly_increasing("area"), "m=n^3: area strictly increasing")
        c.check(ratio > 10, f"m=n^3: n=32 area / cylinder = {ratio:.1f}")
        res = max(np.max(np.abs(t.column("gauss_bonnet_residual"))) for t in (eq, cube))
        c.check(res < 1e-9, f"max Gauss-Bonnet residual {res:.1e}")


def test_criterion_6_green_properties():
    with Criterion(6, "Green function properties", 60.0) as c:
        for bg in (SPHERE, TORUS):
            pts = bg.sample(2000, seed=21)
            x, y = pts[:1000], pts[1000:]
            sym = float(np.max(np.abs(green(bg, x, y) - green(bg, y, x))))
            c.check(sym < 1e-10, f"{bg.kind} symmetry {sym:.1e}")
            x0 = bg.sample(1, seed=22)[0]
            kernel = green_sphere if bg.kind == "sphere" else green_torus
            mean = abs(integrate_over(bg, lambda p: kernel(x0, p), [x0]))
            c.check(mean < 1e-6, f"{bg.kind} mean {mean:.1e}")
            d = np.logspace(-6, -1, 41)
            near = bg.exp(x0, d, np.full(d.size, 0.9))
            h = green(bg, np.repeat(x0[None, :], d.size, axis=0), near) + np.log(d) / TWO_PI
            c.check(np.ptp(h) < 1e-2, f"{bg.kind} G + ln(d)/2pi spread {np.ptp(h):.1e}")
        for name, case in ROUND_TRIPS.items():
            e = round_trip_error(*case)
            c.check(e < 1e-5, f"round trip {name} {e:.1e}")


def test_criterion_7_weak_laplace():
    with Criterion(7, "weak Laplace identity", 120.0) as c:
        for name, case in WEAK_CASES.items():
            errs = weak_laplace_errors(*case)
            c.check(len(errs) == 8 and max(errs) < 1e-5, f"{name}: 8 test functions, max err {max(errs):.1e}")


def test_criterion_8_football():
    with Criterion(8, "football", 120.0) as c:
        metric = build_alexandrov_metric(SPHERE, football_measure(math.pi))
        rep = verify_metric(metric, n_rays=32)
        c.check(abs(rep["gauss_bonnet_residual"]) < 1e-9, f"Gauss-Bonnet residual {rep['gauss_bonnet_residual']:.1e}")
        for pole, name in ((np.array([0.0, 0.0, 1.0]), "N"), (np.array([0.0, 0.0, -1.0]), "S")):
            theta = cone_angle_probe(metric, pole)
            c.check(abs(theta / math.pi - 1) < 0.02, f"{name} probe rel err {theta / math.pi - 1:.1e}")
        pts = SPHERE.sample(8, seed=23)
        shift = 0.3
        worst = 0.0
        for a, b in zip(pts[::2], pts[1::2]):
            d0 = metric_distance(metric, a, b, resolution=3)
            d1 = metric_distance(metric.shifted(shift), a, b, resolution=3)
            worst = max(worst, abs(d1 / (math.exp(shift) * d0) - 1))
        c.check(worst < 1e-9, f"homothety rel err {worst:.1e}")


def test_criterion_9_reshetnyak():
    with Criterion(9, "Reshetnyak experiment", 600.0) as c:
        t = reshetnyak_experiment(TORUS, one_cone_torus_measure(math.pi), (0.25, 0.125, 0.0625), n_pairs=24, seed=0)
        D, W = t.column("uniform_distance"), t.column("weak_distance")
        c.check(t.strictly_decreasing("uniform_distance"), "D = " + ", ".join(f"{v:.3g}" for v in D))
        c.check(t.strictly_decreasing("weak_distance"), "W = " + ", ".join(f"{v:.3g}" for v in W))


def test_criterion_10_geodesic_oracles():
    with Criterion(10, "geodesic oracles", 60.0) as c:
        cube = cube_surface()

        def corner(xyz):
            return vertex_point(cube, int(np.argmin(np.linalg.norm(cube.positions - np.asarray(xyz, float), axis=1))))

        oracle = cube_corner_distance()
        d = intrinsic_distance(cube, corner((0, 0, 0)), corner((1, 1, 1)))
        c.check(abs(oracle - math.sqrt(5)) < 1e-12 and abs(d - oracle) < 1e-4, f"cube corners {d:.9f} vs oracle {oracle:.9f}")
        torus = square_torus()
        rng = np.random.default_rng(24)
        worst = 0.0
        for _ in range(40):
            fa, fb = rng.integers(0, 2, size=2)
            ba, bb = rng.dirichlet([1, 1, 1], size=2)
            dd = intrinsic_distance(torus, SurfacePoint(int(fa), tuple(ba)), SurfacePoint(int(fb), tuple(bb)))
            ref = flat_torus_distance(torus_point(fa, ba), torus_point(fb, bb))
            worst = max(worst, abs(dd / ref - 1))
        c.check(worst < 0.01, f"flat torus max rel err {worst:.1e} over 40 pairs")


if __name__ == "__main__":
    import sys

    sys.exit(__import__("pytest").main([__file__, "-q"]))

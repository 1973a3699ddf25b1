"""Convergence experiments: Schwarz lanterns, mollified atoms, weak distances.

A Schwarz lantern is the inscribed antiprismatic triangulation of a
cylinder. With as many rows as slices its area tends to that of the
cylinder; with rows growing like the cube of the slices it diverges.

The Reshetnyak experiment replaces each atom of a curvature measure by a
smooth bump of radius epsilon, builds both metrics, and tabulates a sampled
uniform distance between them next to a weak distance between the measures.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import sph_harm_y

from . import __version__
from .curvature import (
    CurvatureMeasure,
    boundary_turning,
    gauss_bonnet_residual,
    integrate_test_function,
    vertex_curvature_atoms,
)
from .errors import BadParameter, CuspAtom, EmptyDictionary, EpsilonTooLarge
from .geodesics import uniform_distance
from .mesh_core import ConeSurface, euler_characteristic, surface_from_positions
from .potential import (
    TWO_PI,
    Background,
    BumpPart,
    PrescribedMeasure,
    as_background,
    build_alexandrov_metric,
    metric_distance,
    resolution_ladder,
)

DICTIONARY_VERSION = 1


# ---------------------------------------------------------------- lanterns

@dataclass(frozen=True)
class LanternSpec:
    """``n`` slices around, ``m`` rows along the axis, cylinder radius ``r`` and height ``h``."""

    n: int
    m: int
    r: float = 1.0
    h: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise BadParameter(f"a lantern needs n >= 3 slices, got {self.n}")
        if int(self.m) != self.m or self.m < 1:
            raise BadParameter(f"a lantern needs m >= 1 rows, got {self.m}")
        if not (self.r > 0 and self.h > 0):
            raise BadParameter("lantern radius and height must be positive")


def lantern_mesh(spec: LanternSpec) -> tuple[np.ndarray, np.ndarray]:
    """3D vertices and counter-clockwise faces of the lantern."""
    n, m = int(spec.n), int(spec.m)
    k = np.arange(m + 1)
    i = np.arange(n)
    K, I = np.meshgrid(k, i, indexing="ij")
    ang = TWO_PI * I / n + (K % 2) * math.pi / n
    pts = np.stack([spec.r * np.cos(ang), spec.r * np.sin(ang), spec.h * K / m], axis=-1).reshape(-1, 3)
    vid = lambda kk, ii: kk * n + ii % n
    faces = []
    for kk in range(m):
        a0, a1 = vid(kk, i), vid(kk, i + 1)
        b0, b1 = vid(kk + 1, i), vid(kk + 1, i + 1)
        if kk % 2 == 0:
            # upper ring is rotated forward by half a slice
            faces.append(np.stack([a0, a1, b0], 1))
            faces.append(np.stack([b0, a1, b1], 1))
        else:
            faces.append(np.stack([a0, b1, b0], 1))
            faces.append(np.stack([a0, a1, b1], 1))
    return pts, np.concatenate(faces)


def schwarz_lantern(spec: LanternSpec) -> ConeSurface:
    """Lantern as a cone surface; edge lengths come from the 3D vertices."""
    pts, faces = lantern_mesh(spec)
    return surface_from_positions(pts, faces)


def surface_area(surface: ConeSurface) -> float:
    """Sum of Heron areas of the faces."""
    a, b, c = np.sort(surface.lengths, axis=1)[:, ::-1].T
    # Kahan's stable form of Heron's formula (a >= b >= c)
    q = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return math.fsum((0.25 * np.sqrt(np.maximum(q, 0.0))).tolist())


def lantern_gauss_bonnet(surface: ConeSurface) -> float:
    """Residual of interior defects + boundary turning - 2 pi chi."""
    atoms = vertex_curvature_atoms(surface, threshold=0.0)
    chi = euler_characteristic(surface.combinatorics)
    return gauss_bonnet_residual(atoms, chi, boundary_turning(surface))


# ---------------------------------------------------------------- tables

@dataclass
class ConvergenceTable:
    """Rows of (parameter, values...) with named columns and a manifest."""

    parameter: str
    columns: tuple[str, ...]
    rows: list[tuple[float, ...]] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name == self.parameter:
            return np.array([r[0] for r in self.rows])
        j = self.columns.index(name) + 1
        return np.array([r[j] for r in self.rows])

    def strictly_decreasing(self, name: str) -> bool:
        v = self.column(name)
        return bool(np.all(np.diff(v) < 0))

    def strictly_increasing(self, name: str) -> bool:
        v = self.column(name)
        return bool(np.all(np.diff(v) > 0))

    def flags(self) -> dict[str, dict[str, bool]]:
        return {c: {"strictly_increasing": self.strictly_increasing(c), "strictly_decreasing": self.strictly_decreasing(c)} for c in self.columns}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, *self.columns])
        for r in self.rows:
            w.writerow([f"{x:.9g}" for x in r])
        return buf.getvalue()


def lantern_table(r: float, h: float, ns: Sequence[int], rows: str | Callable[[int], int] = "equal") -> ConvergenceTable:
    """Areas of lanterns for each n; ``rows`` is ``"equal"`` (m = n), ``"cube"`` (m = n^3) or a function."""
    if rows == "equal":
        rows_of = lambda n: n
    elif rows == "cube":
        rows_of = lambda n: n ** 3
    elif callable(rows):
        rows_of = rows
    else:
        raise BadParameter(f"unknown row rule {rows!r}; use 'equal' or 'cube'")
    target = TWO_PI * r * h
    table = ConvergenceTable("n", ("m", "area", "target", "error", "gauss_bonnet_residual", "max_atom", "total_variation"))
    for n in ns:
        spec = LanternSpec(int(n), int(rows_of(n)), r, h)
        s = schwarz_lantern(spec)
        area = surface_area(s)
        atoms = vertex_curvature_atoms(s, threshold=0.0)
        res = lantern_gauss_bonnet(s)
        big = float(np.max(np.abs(atoms.atom_masses))) if atoms.atom_masses.size else 0.0
        table.rows.append((float(n), float(spec.m), area, target, area - target, res, big, atoms.total_variation))
    table.manifest = {"experiment": "lantern", "r": r, "h": h, "n": [int(n) for n in ns], "rows": rows if isinstance(rows, str) else "custom", "version": __version__}
    return table


# ---------------------------------------------------------------- mollification

def _max_epsilon(bg: Background) -> float:
    # the closed-form bump potential needs the ball well inside the fundamental domain
    return 0.5 * math.pi if bg.kind == "sphere" else 0.25


def mollify_atom(background, site, mass: float, epsilon: float) -> PrescribedMeasure:
    """Smooth C^2 bump of total ``mass`` supported in the ball of radius ``epsilon`` about ``site``."""
    bg = as_background(background)
    if not epsilon > 0:
        raise BadParameter(f"epsilon must be positive, got {epsilon}")
    if epsilon > _max_epsilon(bg):
        raise EpsilonTooLarge(f"epsilon {epsilon} exceeds {_max_epsilon(bg):.6g} on the {bg.kind}")
    if mass >= TWO_PI:
        raise CuspAtom(f"atom of mass {mass:.9g} >= 2 pi")
    if mass == 0:
        return PrescribedMeasure(bg)
    p = tuple(bg.points(site)[0].tolist())
    return PrescribedMeasure(bg, (), (BumpPart(p, float(mass), float(epsilon)),))


def mollify_measure(omega: PrescribedMeasure, epsilon: float) -> PrescribedMeasure:
    """Every atom of ``omega`` replaced by its bump; smooth parts kept."""
    out = PrescribedMeasure(omega.background, (), omega.smooth)
    for p, m in omega.atoms:
        out = out + mollify_atom(omega.background, p, m, epsilon)
    return out


# ---------------------------------------------------------------- weak distance

@dataclass(frozen=True)
class DictionaryFunction:
    """A test function with recorded sup norm and Lipschitz constant."""

    name: str
    f: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    sup: float
    lip: float

    def __call__(self, pts):
        return self.f(np.asarray(pts, dtype=float))


_TORUS_MODES = ((1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2), (2, 1), (1, 2), (2, -1), (1, -2), (2, 2), (2, -2))


def _bump(bg: Background, center: np.ndarray, radius: float) -> Callable:
    def f(pts):
        pts = np.atleast_2d(pts)
        if bg.kind == "sphere":
            d = np.linalg.norm(pts - center, axis=-1)  # chord <= arc, so Lip stays valid
        else:
            d = bg.distance(pts, center)
        return np.clip(1.0 - (d / radius) ** 2, 0.0, None) ** 3
    return f


def _real_harmonic(l: int, m: int) -> Callable:
    def f(pts):
        pts = np.atleast_2d(pts)
        theta = np.arccos(np.clip(pts[:, 2] / np.linalg.norm(pts, axis=1), -1.0, 1.0))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        y = sph_harm_y(l, abs(m), theta, phi)
        if m > 0:
            return math.sqrt(2.0) * (-1) ** m * y.real
        if m < 0:
            return math.sqrt(2.0) * (-1) ** m * y.imag
        return y.real
    return f


def _sphere_norms(f: Callable) -> tuple[float, float]:
    """Sup norm and Lipschitz constant estimated on a fine grid, padded by 2%."""
    nt, npk = 181, 360
    theta = np.linspace(0.0, math.pi, nt)
    phi = np.linspace(0.0, TWO_PI, npk, endpoint=False)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    v = f(pts).reshape(T.shape)
    # central differences; longitude steps are arcs of length sin(theta) dphi
    gt = (v[2:, :] - v[:-2, :]) / (2.0 * (theta[1] - theta[0]))
    vp = np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)
    gp = vp[1:-1, :] / (2.0 * (phi[1] - phi[0]) * np.sin(T[1:-1, :]))
    lip = float(np.sqrt(gt ** 2 + gp ** 2).max())
    return 1.02 * float(np.abs(v).max()), 1.02 * lip


def make_dictionary(background, seed: int = 0) -> list[DictionaryFunction]:
    """The fixed 32-function dictionary: 24 low modes plus 8 seeded bumps."""
    bg = as_background(background)
    out: list[DictionaryFunction] = []
    if bg.kind == "torus":
        for a, b in _TORUS_MODES:
            k = TWO_PI * math.hypot(a, b)
            out.append(DictionaryFunction(f"cos({a},{b})", lambda p, a=a, b=b: np.cos(TWO_PI * (a * np.atleast_2d(p)[:, 0] + b * np.atleast_2d(p)[:, 1])), 1.0, k))
            out.append(DictionaryFunction(f"sin({a},{b})", lambda p, a=a, b=b: np.sin(TWO_PI * (a * np.atleast_2d(p)[:, 0] + b * np.atleast_2d(p)[:, 1])), 1.0, k))
    else:
        for l in range(1, 5):
            for m in range(-l, l + 1):
                f = _real_harmonic(l, m)
                sup, lip = _sphere_norms(f)
                out.append(DictionaryFunction(f"Y({l},{m})", f, sup, lip))
    rng = np.random.default_rng(seed)
    centers = bg.sample(8, seed)
    lo, hi = (0.15, 0.35) if bg.kind == "torus" else (0.4, 0.9)
    radii = rng.uniform(lo, hi, size=8)
    for j, (c, R) in enumerate(zip(centers, radii)):
        out.append(DictionaryFunction(f"bump{j}", _bump(bg, c, float(R)), 1.0, 96.0 / (25.0 * math.sqrt(5.0) * R)))
    return out


def _as_curvature(mu) -> CurvatureMeasure:
    return mu.to_curvature_measure() if isinstance(mu, PrescribedMeasure) else mu


def weak_distance(mu1, mu2, dictionary: Sequence[DictionaryFunction], resolution: int = 96) -> float:
    """max over the dictionary of |int f dmu1 - int f dmu2| / (sup f + Lip f)."""
    if not dictionary:
        raise EmptyDictionary("weak_distance needs at least one test function")
    m1, m2 = _as_curvature(mu1), _as_curvature(mu2)
    best = 0.0
    for f in dictionary:
        diff = integrate_test_function(m1, f, resolution) - integrate_test_function(m2, f, resolution)
        best = max(best, abs(diff) / (f.sup + f.lip))
    return best


# ---------------------------------------------------------------- Reshetnyak experiment

def reshetnyak_experiment(
    background,
    omega_target: PrescribedMeasure,
    epsilons: Sequence[float] = (0.25, 0.125, 0.0625),
    n_pairs: int = 24,
    seed: int = 0,
    resolution: int | None = None,
) -> ConvergenceTable:
    """Sampled uniform distance and weak distance between mollified and exact metrics.

    For each epsilon every atom of ``omega_target`` is replaced by a bump of
    radius epsilon, the metric is rebuilt, and the table records the maximum
    distance discrepancy over seeded point pairs next to the weak distance
    of the curvature measures.
    """
    bg = as_background(background)
    exact = build_alexandrov_metric(bg, omega_target)
    pts = bg.sample(2 * n_pairs, seed)
    pairs = [(pts[2 * i], pts[2 * i + 1]) for i in range(n_pairs)]
    dictionary = make_dictionary(bg, seed)
    cache: dict = {}

    def d_exact(x, y):
        key = (tuple(x), tuple(y))
        if key not in cache:
            cache[key] = metric_distance(exact, x, y, resolution)
        return cache[key]

    table = ConvergenceTable("epsilon", ("uniform_distance", "weak_distance", "target"))
    for eps in epsilons:
        moll = mollify_measure(omega_target, eps)
        metric = build_alexandrov_metric(bg, moll)
        D = uniform_distance(lambda x, y: metric_distance(metric, x, y, resolution), d_exact, pairs)
        W = weak_distance(omega_target, moll, dictionary)
        table.rows.append((float(eps), D, W, 0.0))
    table.manifest = {
        "experiment": "reshetnyak",
        "background": bg.kind,
        "omega": omega_target.to_dict(),
        "epsilons": [float(e) for e in epsilons],
        "n_pairs": n_pairs,
        "seed": seed,
        "dictionary_version": DICTIONARY_VERSION,
        "resolution": resolution_ladder(bg, resolution),
        "version": __version__,
    }
    return table


def weak_distance_table(omega: PrescribedMeasure, epsilons: Sequence[float], seed: int = 0) -> ConvergenceTable:
    """Weak distance between ``omega`` and its mollifications only."""
    dictionary = make_dictionary(omega.background, seed)
    table = ConvergenceTable("epsilon", ("weak_distance", "target"))
    for eps in epsilons:
        table.rows.append((float(eps), weak_distance(omega, mollify_measure(omega, eps), dictionary), 0.0))
    table.manifest = {
        "experiment": "weak-distance",
        "omega": omega.to_dict(),
        "epsilons": [float(e) for e in epsilons],
        "seed": seed,
        "dictionary_version": DICTIONARY_VERSION,
        "version": __version__,
    }
    return table

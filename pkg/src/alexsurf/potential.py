"""Green functions, potentials of measures and metrics with prescribed curvature.

Two normalized backgrounds are supported: the unit round sphere (K = 1,
area 4 pi) and the flat square torus of unit area (K = 0). A signed measure
mu of total mass zero has the potential u(x) = int G(x, y) dmu(y), the
zero-mean weak solution of Lap u = mu with the positive Laplacian
Lap = -div grad. A target curvature measure omega with total 2 pi chi and
atoms below 2 pi is realised by the metric e^(2u) h with
u the potential of omega - K_h dA_h.

Points on the sphere are unit vectors of shape (3,); points on the torus
are pairs in [0, 1)^2.
"""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import _kernels_py, kernels
from ._graph import Attachment, MetricGraph
from .conformal import ConformalChartMetric, GridFunction, _offsets, smooth_curvature_from_factor
from .curvature import CurvatureMeasure, FacePart, gauss_bonnet_residual
from .errors import (
    BadParameter,
    CoincidentPoints,
    CuspAtom,
    GaussBonnetViolation,
    NonZeroTotalMass,
    ResolutionTooLow,
    TruncationNotConverged,
)
from .quadrature import GAUSS3_NODES, GAUSS3_WEIGHTS, gauss_legendre, segment_integral

TWO_PI = 2.0 * math.pi
#: tolerance on the total mass of a measure fed to :func:`potential_of_measure`
ZERO_MASS_TOL = 1e-10
#: tolerance on the Gauss-Bonnet total of a target curvature measure
GAUSS_BONNET_TOL = 1e-8
#: largest admissible tail of the torus lattice sums
EWALD_TAIL_TOL = 1e-10
#: atoms with |mass| below this are ignored as singular points
SINGULAR_THRESHOLD = 1e-12


# ---------------------------------------------------------------- backgrounds

@dataclass(frozen=True)
class Background:
    """Round unit sphere (``"sphere"``) or flat unit-area square torus (``"torus"``)."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("sphere", "torus"):
            raise BadParameter(f"unknown background {self.kind!r}; use 'sphere' or 'torus'")

    @property
    def dim(self) -> int:
        return 3 if self.kind == "sphere" else 2

    @property
    def area(self) -> float:
        return 4.0 * math.pi if self.kind == "sphere" else 1.0

    @property
    def curvature(self) -> float:
        return 1.0 if self.kind == "sphere" else 0.0

    @property
    def euler_characteristic(self) -> int:
        return 2 if self.kind == "sphere" else 0

    @property
    def injectivity_radius(self) -> float:
        return math.pi if self.kind == "sphere" else 0.5

    def points(self, x) -> np.ndarray:
        """Normalise points to shape (n, dim): unit vectors or coordinates mod 1."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise BadParameter(f"{self.kind} points have {self.dim} coordinates, got {x.shape[-1]}")
        if self.kind == "sphere":
            n = np.linalg.norm(x, axis=-1, keepdims=True)
            if np.any(n == 0):
                raise BadParameter("the zero vector is not a point of the sphere")
            return x / n
        return x - np.floor(x)

    def distance(self, x, y) -> np.ndarray:
        """Background geodesic distance, broadcasting over leading axes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "sphere":
            c = np.linalg.norm(np.cross(x, y), axis=-1)
            return np.arctan2(c, np.sum(x * y, axis=-1))
        d = x - y
        d = d - np.round(d)
        return np.linalg.norm(d, axis=-1)

    def exp(self, center, r, angle) -> np.ndarray:
        """Point at distance ``r`` from ``center`` in direction ``angle``."""
        r = np.asarray(r, dtype=float)
        angle = np.asarray(angle, dtype=float)
        c = np.asarray(center, dtype=float)
        if self.kind == "sphere":
            e1, e2 = tangent_frame(c)
            d = np.cos(angle)[..., None] * e1 + np.sin(angle)[..., None] * e2
            return np.cos(r)[..., None] * c + np.sin(r)[..., None] * d
        p = c + np.stack([r * np.cos(angle), r * np.sin(angle)], axis=-1)
        return p - np.floor(p)

    def jacobian(self, r):
        """Area element of geodesic polar coordinates, per dr dangle."""
        return np.sin(r) if self.kind == "sphere" else np.asarray(r, dtype=float)

    def grid_rule(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Global product rule: Gauss in cos(colatitude) x trapezoid in longitude, or n x n midpoints."""
        if self.kind == "sphere":
            c, wc = gauss_legendre(n, -1.0, 1.0)
            phi = TWO_PI * (np.arange(2 * n) + 0.5) / (2 * n)
            C, P = np.meshgrid(c, phi, indexing="ij")
            s = np.sqrt(1.0 - C ** 2)
            pts = np.stack([s * np.cos(P), s * np.sin(P), C], axis=-1).reshape(-1, 3)
            w = np.repeat(wc, 2 * n) * (TWO_PI / (2 * n))
            return pts, w
        t = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(t, t, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1), np.full(n * n, 1.0 / n ** 2)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """``n`` quasi-uniform points from a scrambled Halton sequence."""
        u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
        if self.kind == "torus":
            return u
        z = 2.0 * u[:, 0] - 1.0
        phi = TWO_PI * u[:, 1]
        s = np.sqrt(1.0 - z ** 2)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


SPHERE = Background("sphere")
TORUS = Background("torus")


def as_background(bg) -> Background:
    return bg if isinstance(bg, Background) else Background(str(bg))


def tangent_frame(c) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent frame at a unit vector (fixed convention at the poles)."""
    c = np.asarray(c, dtype=float)
    ref = np.array([0.0, 0.0, 1.0]) if abs(c[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(ref, c)
    if abs(c[2]) >= 0.9:
        e1 = np.array([1.0, 0.0, 0.0]) - c[0] * c
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return e1, e2


# ---------------------------------------------------------------- Green functions

def _check_apart(bg: Background, x, y):
    if np.any(bg.distance(x, y) < 1e-14):
        raise CoincidentPoints("the Green function is singular on the diagonal")


def green_sphere(x, y):
    """G(x, y) = -(1/2pi)(ln sin(d/2) + 1/2) on the unit sphere.

    The constant makes G zero-mean in each variable: the mean of
    ln sin(d/2) over the sphere is -1/2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_apart(SPHERE, x, y)
    chord = np.linalg.norm(x - y, axis=-1)
    out = -(np.log(chord / 2.0) + 0.5) / TWO_PI
    return float(out) if out.ndim == 0 else out


def ewald_tail_bound(reach: int) -> float:
    """Bound on the neglected terms of both torus lattice sums at ``reach``."""
    total = 0.0
    for j in range(reach + 1, reach + 40):
        r = j - 0.5
        # 8j lattice points on the ring of sup-norm j
        total += 8 * j * math.exp(-math.pi * r * r) / (4.0 * math.pi ** 2 * r * r)
        total += 8 * j * math.exp(-math.pi * j * j) / (4.0 * math.pi ** 2 * j * j)
    return total


def green_torus(x, y, reach: int = _kernels_py.EWALD_REACH):
    """Zero-mean Green function of the flat unit square torus.

    The dual-lattice series sum_{k != 0} cos(2 pi k.(x-y)) / (4 pi^2 |k|^2)
    converges slowly; it is accelerated by an Ewald split, after which both
    lattice sums decay like exp(-pi |.|^2) and are truncated at ``reach``.
    """
    if ewald_tail_bound(reach) > EWALD_TAIL_TOL:
        raise TruncationNotConverged(f"lattice sums truncated at reach {reach} leave a tail above {EWALD_TAIL_TOL}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_apart(TORUS, x, y)
    d = x - y
    if reach == _kernels_py.EWALD_REACH:
        out = np.asarray(kernels.torus_green_diff(np.ascontiguousarray(d[..., 0]), np.ascontiguousarray(d[..., 1])))
    else:
        out = _kernels_py.torus_green_diff(d[..., 0], d[..., 1], reach=reach)
    return float(out) if np.ndim(out) == 0 else out


def green(bg: Background, x, y):
    return green_sphere(x, y) if bg.kind == "sphere" else green_torus(x, y)


def _green_offsets(bg: Background, r, angle) -> np.ndarray:
    """G between a point and the point at polar offset (r, angle) from it."""
    if bg.kind == "sphere":
        return -(np.log(np.sin(r / 2.0)) + 0.5) / TWO_PI
    dx, dy = r * np.cos(angle), r * np.sin(angle)
    return np.asarray(kernels.torus_green_diff(np.ascontiguousarray(dx.ravel()), np.ascontiguousarray(dy.ravel()))).reshape(np.shape(dx))


# ---------------------------------------------------------------- singular-aware quadrature

def _cutoff(s):
    """C-infinity partition function: 1 for s <= 1/2, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = np.clip(1.0 - s, 0.0, None)
    b = np.clip(s - 0.5, 0.0, None)
    with np.errstate(divide="ignore", over="ignore"):
        ga = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        gb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return ga / (ga + gb)


def _cap_radius(bg: Background, points: np.ndarray) -> float:
    rc = 0.5 if bg.kind == "sphere" else 0.2
    if len(points) > 1:
        d = bg.distance(points[:, None, :], points[None, :, :])
        d = d[np.triu_indices(len(points), 1)]
        rc = min(rc, 0.45 * float(d.min()))
    return rc


def _polar_rule(n_r: int, n_phi: int, rc: float):
    """Nodes (r, angle) and weights dr dangle on the disk of radius rc, graded towards 0."""
    s, ws = gauss_legendre(n_r)
    r = rc * s ** 2
    wr = 2.0 * rc * s * ws
    phi = TWO_PI * np.arange(n_phi) / n_phi
    R, P = np.meshgrid(r, phi, indexing="ij")
    W = np.repeat(wr, n_phi).reshape(R.shape) * (TWO_PI / n_phi)
    return R, P, W


def integrate_over(bg, F: Callable[[np.ndarray], np.ndarray], singular_points=(), n: int = 128, n_cap: int = 48) -> float:
    """Integral of ``F`` over the background allowing log-type singularities.

    A smooth partition of unity splits off a geodesic cap around each
    singular point; caps use graded polar rules, the remainder uses the
    global product rule of size ``n``.
    """
    bg = as_background(bg)
    sing = bg.points(singular_points) if len(singular_points) else np.zeros((0, bg.dim))
    pts, w = bg.grid_rule(n)
    rest = np.ones(len(pts))
    rc = _cap_radius(bg, sing) if len(sing) else 0.0
    for p in sing:
        rest -= _cutoff(bg.distance(pts, p) / rc)
    keep = rest > 0
    total = float(np.dot(w[keep] * rest[keep], F(pts[keep])))
    if len(sing):
        R, P, W = _polar_rule(n_cap, 2 * n_cap, rc)
        W = W * bg.jacobian(R) * _cutoff(R / rc)
        for p in sing:
            q = bg.exp(p, R.ravel(), P.ravel())
            total += float(np.dot(W.ravel(), F(q)))
    return total


# ---------------------------------------------------------------- smooth parts of measures

@dataclass(frozen=True)
class UniformPart:
    """Constant density over the background with the given total mass; its potential is zero."""

    mass: float

    def density(self, bg: Background, pts) -> np.ndarray:
        return np.full(len(pts), self.mass / bg.area)

    def potential(self, bg: Background, pts) -> np.ndarray:
        return np.zeros(len(pts))

    def scaled(self, c: float) -> "UniformPart":
        return UniformPart(c * self.mass)

    def sampler(self, bg: Background):
        def sample(n):
            pts, w = bg.grid_rule(max(2, n))
            return pts, w / w.sum()
        return sample

    def to_dict(self, bg: Background) -> dict:
        return {"kind": "uniform", "data": self.mass / bg.area}


@dataclass(frozen=True)
class BumpPart:
    """C^2 bump c (1 - v)^3 of total ``mass`` supported in the ball of radius ``epsilon``.

    ``v`` is (1 - cos d) / (1 - cos epsilon) on the sphere and (d / epsilon)^2
    on the torus, so the mass and the potential have closed forms.
    """

    site: tuple
    mass: float
    epsilon: float

    def _kappa(self, bg: Background) -> float:
        return 2.0 * math.sin(0.5 * self.epsilon) ** 2 if bg.kind == "sphere" else self.epsilon ** 2

    def _v(self, bg: Background, pts) -> np.ndarray:
        d = bg.distance(np.asarray(pts, dtype=float), np.asarray(self.site, dtype=float))
        if bg.kind == "sphere":
            # 1 - cos d without cancellation near the site
            return 2.0 * np.sin(0.5 * d) ** 2 / self._kappa(bg)
        return (d / self.epsilon) ** 2

    def density(self, bg: Background, pts) -> np.ndarray:
        # v-area element is kappa dv dangle on the sphere, (eps^2 / 2) dv dangle on the torus
        k = self._kappa(bg) if bg.kind == "sphere" else 0.5 * self.epsilon ** 2
        c = 4.0 * self.mass / (TWO_PI * k)
        v = self._v(bg, pts)
        return np.where(v < 1.0, c * np.clip(1.0 - v, 0.0, None) ** 3, 0.0)

    def _correction(self, bg: Background, v: np.ndarray) -> np.ndarray:
        """u - mass*G at parameter v < 1 (zero for v >= 1, before the mean shift)."""
        v = np.clip(v, 1e-300, 1.0)
        i1 = -25.0 / 12.0 - np.log(v) + 4 * v - 3 * v ** 2 + 4.0 / 3.0 * v ** 3 - v ** 4 / 4.0
        out = i1
        if bg.kind == "sphere":
            kap = self._kappa(bg)
            x, w = gauss_legendre(24)
            t = v[:, None] + (1.0 - v)[:, None] * x[None, :]
            i2 = (1.0 - v) * np.sum(w * kap * (1.0 - t) ** 4 / (2.0 - kap * t), axis=1)
            out = i1 + i2
        return -self.mass / (2.0 * TWO_PI) * out

    def _mean_correction(self, bg: Background) -> float:
        if bg.kind == "torus":
            return -self.mass * self.epsilon ** 2 / 20.0
        kap = self._kappa(bg)
        x, w = gauss_legendre(24)
        j2 = float(np.sum(w * x * kap * (1.0 - x) ** 4 / (2.0 - kap * x)))
        return -self.mass * kap / (8.0 * math.pi) * (0.2 + j2)

    def potential(self, bg: Background, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        site = np.asarray(self.site, dtype=float)
        out = np.full(len(pts), -self._mean_correction(bg))
        if self.mass == 0:
            return np.zeros(len(pts))
        v = self._v(bg, pts)
        far = bg.distance(pts, site) > 1e-14
        g = np.zeros(len(pts))
        g[far] = _atom_sum(bg, pts[far], site[None, :], np.array([self.mass]))
        inside = v < 1.0
        corr = np.zeros(len(pts))
        if inside.any():
            corr[inside] = self._correction(bg, v[inside])
        # at the site the log terms cancel: take the limit
        at = ~far
        if at.any():
            lim = -self.mass / (2.0 * TWO_PI) * (-25.0 / 12.0)
            if bg.kind == "sphere":
                kap = self._kappa(bg)
                x, w = gauss_legendre(24)
                lim += -self.mass / (2.0 * TWO_PI) * float(np.sum(w * kap * (1.0 - x) ** 4 / (2.0 - kap * x)))
                # G = -(1/2pi)(ln(chord/2) + 1/2), chord^2 = 2 kappa v; the ln v halves cancel
                lim += -self.mass / TWO_PI * (0.5 * math.log(2 * kap) - math.log(2.0) + 0.5)
            else:
                # G(r) + (1/2pi) ln r -> regular part of the torus kernel at 0
                lim += self.mass * (_torus_regular_part() - math.log(self.epsilon) / TWO_PI)
            g[at] = 0.0
            corr[at] = lim
        return out + g + corr

    def scaled(self, c: float) -> "BumpPart":
        return BumpPart(self.site, c * self.mass, self.epsilon)

    def sampler(self, bg: Background):
        def sample(n):
            n = max(2, n)
            x, w = gauss_legendre(n)
            v = x
            phi = TWO_PI * np.arange(2 * n) / (2 * n)
            V, P = np.meshgrid(v, phi, indexing="ij")
            W = (np.repeat(w, 2 * n).reshape(V.shape)) * (1.0 - V) ** 3
            if bg.kind == "sphere":
                r = np.arccos(np.clip(1.0 - self._kappa(bg) * V, -1.0, 1.0))
            else:
                r = self.epsilon * np.sqrt(V)
            pts = bg.exp(np.asarray(self.site, dtype=float), r.ravel(), P.ravel())
            W = W.ravel()
            return pts, W / W.sum()
        return sample

    def to_dict(self, bg: Background) -> dict:
        return {"kind": "bump", "site": list(map(float, self.site)), "mass": self.mass, "epsilon": self.epsilon}


_REG_CACHE: dict = {}


def _torus_regular_part() -> float:
    """lim_{r -> 0} G_torus(r) + (1/2pi) ln r."""
    if "c" not in _REG_CACHE:
        r = np.array([1e-4, 1e-5])
        g = np.asarray(kernels.torus_green_diff(r, np.zeros(2))) + np.log(r) / TWO_PI
        # the remainder is r^2/4 + O(r^2); extrapolate
        _REG_CACHE["c"] = float(g[1] - (g[0] - g[1]) * (1e-10 / (1e-8 - 1e-10)))
    return _REG_CACHE["c"]


@dataclass(frozen=True, eq=False)
class DensityPart:
    """A smooth density given by a callable on background points.

    The potential is the convolution with G computed by direct quadrature:
    a graded polar cap around each target plus a global product rule
    (``resolution`` nodes per direction). Large batches of targets are served
    from a cached table with cubic interpolation.
    """

    func: Callable[[np.ndarray], np.ndarray]
    resolution: int = 128
    label: str = "density"
    data: Any = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def density(self, bg: Background, pts) -> np.ndarray:
        return np.asarray(self.func(np.asarray(pts, dtype=float)), dtype=float)

    def mass(self, bg: Background) -> float:
        key = ("mass", bg.kind)
        if key not in self._cache:
            pts, w = bg.grid_rule(self.resolution)
            self._cache[key] = float(np.dot(w, self.density(bg, pts)))
        return self._cache[key]

    def scaled(self, c: float) -> "DensityPart":
        f = self.func
        data = None if self.data is None else c * np.asarray(self.data)
        return DensityPart(lambda x: c * f(x), self.resolution, self.label, data)

    def potential(self, bg: Background, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if len(pts) > 2000:
            return self._table(bg)(pts)
        return self.potential_direct(bg, pts)

    def potential_direct(self, bg: Background, pts) -> np.ndarray:
        pts = bg.points(pts)
        if bg.kind == "sphere":
            return _sphere_conv(self.func, pts)
        return _torus_conv(self.func, pts, self.resolution)

    def _table(self, bg: Background):
        key = ("table", bg.kind)
        if key not in self._cache:
            self._cache[key] = _sphere_table(self.func) if bg.kind == "sphere" else _torus_table(self.func, self.resolution)
        return self._cache[key]

    def signed_samplers(self, bg: Background):
        """(mass, sampler) for the positive and the negative part."""
        out = []
        for sign in (1.0, -1.0):
            def sample(n, sign=sign):
                pts, w = bg.grid_rule(max(2, n))
                f = np.clip(sign * self.density(bg, pts), 0.0, None) * w
                s = f.sum()
                return pts, (f / s if s > 0 else f)
            pts, w = bg.grid_rule(self.resolution)
            m = float(np.dot(w, np.clip(sign * self.density(bg, pts), 0.0, None)))
            out.append((sign * m, sample))
        return out

    def to_dict(self, bg: Background) -> dict:
        if self.data is None:
            raise BadParameter("a density given by a function cannot be serialised; sample it on a grid")
        return {"kind": "grid", "data": np.asarray(self.data).tolist()}


def _sphere_conv(f, pts: np.ndarray, n_phi: int = 64) -> np.ndarray:
    # d in [0, pi/4] graded (d = (pi/4) s^2), then plain Gauss on [pi/4, pi]
    s, ws = gauss_legendre(24)
    d1 = 0.25 * math.pi * s ** 2
    w1 = 0.5 * math.pi * s * ws
    d2, w2 = gauss_legendre(32, 0.25 * math.pi, math.pi)
    d = np.concatenate([d1, d2])
    wd = np.concatenate([w1, w2]) * np.sin(d) * (-(np.log(np.sin(d / 2.0)) + 0.5) / TWO_PI)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    D, P = np.meshgrid(d, phi, indexing="ij")
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        y = SPHERE.exp(x, D.ravel(), P.ravel())
        vals = np.asarray(f(y), dtype=float).reshape(D.shape)
        out[i] = float(np.dot(wd, vals.mean(axis=1))) * TWO_PI
    return out


_TORUS_CAP = 0.2


def _torus_cap_rule():
    R, P, W = _polar_rule(48, 48, _TORUS_CAP)
    K = _green_offsets(TORUS, R, P) * W * R * _cutoff(R / _TORUS_CAP)
    return R, P, K


def _torus_conv(f, pts: np.ndarray, n: int) -> np.ndarray:
    R, P, K = _torus_cap_rule()
    off = np.stack([(R * np.cos(P)).ravel(), (R * np.sin(P)).ravel()], axis=-1)
    K = K.ravel()
    ys, wy = TORUS.grid_rule(n)
    fy = np.asarray(f(ys), dtype=float) * wy
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        q = x + off
        cap = float(np.dot(K, f(q - np.floor(q))))
        d = x - ys
        d -= np.round(d)
        r = np.hypot(d[:, 0], d[:, 1])
        keep = r > 0.5 * _TORUS_CAP
        g = np.asarray(kernels.torus_green_diff(np.ascontiguousarray(d[keep, 0]), np.ascontiguousarray(d[keep, 1])))
        out[i] = cap + float(np.dot(g * (1.0 - _cutoff(r[keep] / _TORUS_CAP)), fy[keep]))
    return out


def _torus_table(f, n: int):
    """Potential on the n x n midpoint grid: FFT convolution of the cut-off kernel plus caps."""
    ys, wy = TORUS.grid_rule(n)
    F = np.asarray(f(ys), dtype=float).reshape(n, n) / n ** 2
    k = np.arange(n)
    k = np.where(k > n // 2, k - n, k) / n
    DX, DY = np.meshgrid(k, k, indexing="ij")
    r = np.hypot(DX, DY)
    Kg = np.zeros((n, n))
    keep = r > 0.5 * _TORUS_CAP
    Kg[keep] = np.asarray(kernels.torus_green_diff(np.ascontiguousarray(DX[keep]), np.ascontiguousarray(DY[keep])))
    Kg *= 1.0 - _cutoff(r / _TORUS_CAP)
    glob = np.real(np.fft.ifft2(np.fft.fft2(Kg) * np.fft.fft2(F)))
    R, P, K = _torus_cap_rule()
    off = np.stack([(R * np.cos(P)).ravel(), (R * np.sin(P)).ravel()], axis=-1)
    K = K.ravel()
    cap = np.empty(n * n)
    for i, x in enumerate(ys):
        q = x + off
        cap[i] = float(np.dot(K, f(q - np.floor(q))))
    table = glob + cap.reshape(n, n)

    def evaluate(pts):
        pts = np.asarray(pts, dtype=float)
        c = (pts - np.floor(pts)) * n - 0.5
        return map_coordinates(table, [c[:, 0], c[:, 1]], order=3, mode="grid-wrap")

    return evaluate


def _sphere_table(f, n_theta: int = 40):
    theta = math.pi * (np.arange(n_theta) + 0.5) / n_theta
    n_phi = 2 * n_theta
    phi = TWO_PI * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
    vals = _sphere_conv(f, pts).reshape(n_theta, n_phi)
    poles = _sphere_conv(f, np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]))
    th = np.concatenate([[0.0], theta, [math.pi]])
    grid = np.vstack([np.full(n_phi, poles[0]), vals, np.full(n_phi, poles[1])])
    pad = 3
    ph = np.concatenate([phi[-pad:] - TWO_PI, phi, phi[:pad] + TWO_PI])
    grid = np.hstack([grid[:, -pad:], grid, grid[:, :pad]])
    spline = RectBivariateSpline(th, ph, grid, kx=3, ky=3)

    def evaluate(pts):
        pts = np.asarray(pts, dtype=float)
        t = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
        p = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        return spline.ev(t, p)

    return evaluate


def grid_density(bg: Background, data) -> DensityPart:
    """Density from cell-centred samples.

    Torus: ``data[i][j]`` at ((i + 1/2)/n, (j + 1/2)/n), periodic cubic
    interpolation. Sphere: ``data[i][j]`` at colatitude (i + 1/2) pi / n_theta
    and longitude (j + 1/2) 2 pi / n_phi, bicubic interpolation.
    """
    a = np.asarray(data, dtype=float)
    if a.ndim != 2 or min(a.shape) < 4:
        raise BadParameter("grid densities need a 2-D array with at least 4 samples per direction")
    if bg.kind == "torus":
        n0, n1 = a.shape

        def f(pts):
            pts = np.asarray(pts, dtype=float)
            c = pts - np.floor(pts)
            return map_coordinates(a, [c[:, 0] * n0 - 0.5, c[:, 1] * n1 - 0.5], order=3, mode="grid-wrap")

        return DensityPart(f, label="grid", data=a)
    nt, nphi = a.shape
    theta = math.pi * (np.arange(nt) + 0.5) / nt
    phi = TWO_PI * (np.arange(nphi) + 0.5) / nphi
    th = np.concatenate([[0.0], theta, [math.pi]])
    grid = np.vstack([np.full(nphi, a[0].mean()), a, np.full(nphi, a[-1].mean())])
    pad = 3
    ph = np.concatenate([phi[-pad:] - TWO_PI, phi, phi[:pad] + TWO_PI])
    grid = np.hstack([grid[:, -pad:], grid, grid[:, :pad]])
    spline = RectBivariateSpline(th, ph, grid, kx=3, ky=3)

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        t = np.arccos(np.clip(pts[:, 2] / np.linalg.norm(pts, axis=1), -1.0, 1.0))
        p = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
        return spline.ev(t, p)

    return DensityPart(g, label="grid", data=a)


def _part_mass(part, bg: Background) -> float:
    if isinstance(part, DensityPart):
        return part.mass(bg)
    return float(part.mass)


# ---------------------------------------------------------------- measures

@dataclass(frozen=True, eq=False)
class PrescribedMeasure:
    """Atoms plus smooth parts on a background.

    ``atoms`` is a sequence of (point, mass); ``smooth`` a sequence of
    :class:`UniformPart`, :class:`BumpPart` or :class:`DensityPart`.
    """

    background: Background
    atoms: tuple = ()
    smooth: tuple = ()

    def __post_init__(self):
        bg = as_background(self.background)
        object.__setattr__(self, "background", bg)
        atoms = []
        for p, m in self.atoms:
            atoms.append((tuple(bg.points(p)[0].tolist()), float(m)))
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "smooth", tuple(self.smooth))

    @property
    def atom_points(self) -> np.ndarray:
        return np.array([p for p, _ in self.atoms], dtype=float).reshape(-1, self.background.dim)

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms], dtype=float)

    @property
    def total_mass(self) -> float:
        return math.fsum([m for _, m in self.atoms] + [_part_mass(s, self.background) for s in self.smooth])

    def check_atoms(self) -> None:
        for p, m in self.atoms:
            if m >= TWO_PI:
                raise CuspAtom(f"atom of mass {m:.9g} >= 2 pi at {p}")

    def __add__(self, other: "PrescribedMeasure") -> "PrescribedMeasure":
        if other.background != self.background:
            raise BadParameter("measures live on different backgrounds")
        return PrescribedMeasure(self.background, self.atoms + other.atoms, self.smooth + other.smooth)

    def scaled(self, c: float) -> "PrescribedMeasure":
        return PrescribedMeasure(
            self.background,
            tuple((p, c * m) for p, m in self.atoms),
            tuple(s.scaled(c) for s in self.smooth),
        )

    def __neg__(self) -> "PrescribedMeasure":
        return self.scaled(-1.0)

    def __sub__(self, other: "PrescribedMeasure") -> "PrescribedMeasure":
        return self + (-other)

    def density(self, pts) -> np.ndarray:
        """Density of the smooth parts per unit background area."""
        pts = self.background.points(pts)
        out = np.zeros(len(pts))
        for s in self.smooth:
            out += s.density(self.background, pts)
        return out

    def to_curvature_measure(self) -> CurvatureMeasure:
        bg = self.background
        faces = []
        for k, s in enumerate(self.smooth):
            if isinstance(s, DensityPart):
                for sign, (m, sampler) in zip("+-", s.signed_samplers(bg)):
                    faces.append(FacePart(f"{s.label}{k}{sign}", m, sampler))
            else:
                faces.append(FacePart(f"{type(s).__name__}{k}", float(s.mass), s.sampler(bg)))
        return CurvatureMeasure(
            tuple(range(len(self.atoms))),
            self.atom_masses,
            self.atom_points if self.atoms else None,
            (),
            tuple(faces),
        )

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], resolution: int = 96) -> float:
        """Integral of a vectorised test function against the measure."""
        from .curvature import integrate_test_function

        return integrate_test_function(self.to_curvature_measure(), f, resolution)

    def to_dict(self) -> dict:
        bg = self.background
        smooth = [s.to_dict(bg) for s in self.smooth]
        return {
            "background": bg.kind,
            "atoms": [{"point": list(p), "mass": m} for p, m in self.atoms],
            "smooth": smooth[0] if len(smooth) == 1 else smooth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrescribedMeasure":
        try:
            bg = as_background(d["background"])
            atoms = [(a["point"], float(a["mass"])) for a in d.get("atoms", [])]
        except (KeyError, TypeError) as e:
            raise BadParameter(f"malformed measure: {e}") from None
        raw = d.get("smooth") or []
        if isinstance(raw, dict):
            raw = [raw]
        smooth = []
        for s in raw:
            kind = s.get("kind")
            if kind == "uniform":
                if "mass" in s:
                    smooth.append(UniformPart(float(s["mass"])))
                else:
                    smooth.append(UniformPart(float(s["data"]) * bg.area))
            elif kind == "grid":
                smooth.append(grid_density(bg, s["data"]))
            elif kind == "bump":
                site = tuple(bg.points(s["site"])[0].tolist())
                smooth.append(BumpPart(site, float(s["mass"]), float(s["epsilon"])))
            elif kind in (None, "none"):
                continue
            else:
                raise BadParameter(f"unknown smooth part kind {kind!r}")
        return cls(bg, tuple(atoms), tuple(smooth))


def load_measure(path) -> PrescribedMeasure:
    with open(path) as fh:
        return PrescribedMeasure.from_dict(json.load(fh))


def football_measure(theta: float) -> PrescribedMeasure:
    """(2 pi - theta)(delta_N + delta_S) + (theta / 2 pi) dA on the sphere."""
    m = TWO_PI - theta
    return PrescribedMeasure(
        SPHERE,
        (((0.0, 0.0, 1.0), m), ((0.0, 0.0, -1.0), m)),
        (UniformPart(theta / TWO_PI * SPHERE.area),),
    )


def one_cone_torus_measure(mass: float, site=(0.5, 0.5)) -> PrescribedMeasure:
    """mass * delta_site - mass * dA on the unit torus."""
    return PrescribedMeasure(TORUS, ((site, mass),), (UniformPart(-mass),))


# ---------------------------------------------------------------- potentials

def _atom_sum(bg: Background, pts, sites, masses) -> np.ndarray:
    pts = np.ascontiguousarray(pts, dtype=float)
    if len(sites) == 0 or len(pts) == 0:
        return np.zeros(len(pts))
    sites = np.ascontiguousarray(sites, dtype=float)
    masses = np.ascontiguousarray(masses, dtype=float)
    if bg.kind == "sphere":
        return np.asarray(kernels.sphere_green_sum(pts, sites, masses))
    out = np.zeros(len(pts))
    for p, m in zip(sites, masses):
        d = pts - p
        out += m * torus_green_fast(d[:, 0], d[:, 1])
    return out


_SPLINE: dict = {}


def torus_green_fast(dx, dy) -> np.ndarray:
    """Torus Green function via a quintic spline of its smooth part.

    G + ln(r)/(2 pi) is analytic on the fundamental square; a spline of it
    on a 257 x 257 grid reproduces the Ewald sums to ~1e-13 at a fraction
    of the cost. Coincident pairs give 0, as in the kernel sums.
    """
    if "s" not in _SPLINE:
        t = np.linspace(-0.5, 0.5, 257)
        X, Y = np.meshgrid(t, t, indexing="ij")
        r = np.hypot(X, Y)
        zero = r == 0
        G = np.asarray(kernels.torus_green_diff(np.where(zero, 1e-6, X).ravel(), np.where(zero, 0.0, Y).ravel())).reshape(X.shape)
        R = G + np.log(np.where(zero, 1e-6, r)) / TWO_PI
        R[zero] = _torus_regular_part()
        _SPLINE["s"] = RectBivariateSpline(t, t, R, kx=5, ky=5)
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    dx = dx - np.round(dx)
    dy = dy - np.round(dy)
    r = np.hypot(dx, dy)
    ok = r > _kernels_py.COINCIDENT
    out = np.zeros(np.shape(dx))
    out[ok] = _SPLINE["s"].ev(dx[ok], dy[ok]) - np.log(r[ok]) / TWO_PI
    return out


@dataclass(frozen=True, eq=False)
class PotentialFunction:
    """u = sum_i m_i G(., p_i) + potentials of smooth parts + constant.

    Values at atom sites are not defined (the kernel sum skips coincident
    pairs there).
    """

    background: Background
    atom_points: np.ndarray
    atom_masses: np.ndarray
    smooth: tuple = ()
    constant: float = 0.0

    def __call__(self, pts) -> np.ndarray:
        pts = self.background.points(pts)
        out = _atom_sum(self.background, pts, self.atom_points, self.atom_masses)
        for s in self.smooth:
            out = out + s.potential(self.background, pts)
        return out + self.constant

    def shifted(self, c: float) -> "PotentialFunction":
        return replace(self, constant=self.constant + c)

    @property
    def singular_points(self) -> np.ndarray:
        keep = np.abs(self.atom_masses) > SINGULAR_THRESHOLD
        return self.atom_points[keep]

    def mean(self, n: int = 128) -> float:
        bg = self.background
        return integrate_over(bg, self, self.singular_points, n) / bg.area


def potential_of_measure(background, mu: PrescribedMeasure) -> PotentialFunction:
    """Potential u(x) = int G(x, y) dmu(y) of a measure of total mass zero."""
    bg = as_background(background)
    if mu.background != bg:
        raise BadParameter("measure and background differ")
    mu.check_atoms()
    total = mu.total_mass
    scale = max(1.0, sum(abs(m) for _, m in mu.atoms) + sum(abs(_part_mass(s, bg)) for s in mu.smooth))
    if abs(total) > ZERO_MASS_TOL * scale:
        raise NonZeroTotalMass(f"total mass {total:.3e} is not zero")
    keep = [(p, m) for p, m in mu.atoms if m != 0.0]
    pts = np.array([p for p, _ in keep], dtype=float).reshape(-1, bg.dim)
    masses = np.array([m for _, m in keep], dtype=float)
    smooth = tuple(s for s in mu.smooth if not isinstance(s, UniformPart))
    return PotentialFunction(bg, pts, masses, smooth)


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True, eq=False)
class SingularMetric:
    """The metric e^(2u) h on a background."""

    background: Background
    u: PotentialFunction
    omega: PrescribedMeasure | None = None

    def factor(self, pts) -> np.ndarray:
        """Conformal factor e^(2u)."""
        return np.exp(2.0 * self.u(pts))

    def shifted(self, c: float) -> "SingularMetric":
        """Same metric scaled by e^c (u -> u + c)."""
        return SingularMetric(self.background, self.u.shifted(c), self.omega)

    @property
    def atoms(self) -> list[tuple[tuple, float]]:
        return list(zip(map(tuple, self.u.atom_points.tolist()), self.u.atom_masses.tolist()))

    def chart_metric(self) -> ConformalChartMetric:
        """The sphere metric in the stereographic chart sending N to 0 and S to infinity."""
        if self.background.kind != "sphere":
            raise BadParameter("stereographic charts exist only for the sphere")
        u = self.u

        def density(z):
            z = np.asarray(z, dtype=complex)
            r2 = np.abs(z) ** 2
            p = np.stack([2 * z.real, 2 * z.imag, 1.0 - r2], axis=-1) / (1.0 + r2)[..., None]
            with np.errstate(over="ignore", invalid="ignore"):
                vals = np.exp(2.0 * u(p.reshape(-1, 3))).reshape(z.shape)
                return vals * 4.0 / (1.0 + r2) ** 2

        cones = []
        for p in u.singular_points:
            cones.append(complex("inf") if p[2] <= -1.0 + 1e-15 else complex(p[0], p[1]) / (1.0 + p[2]))
        return ConformalChartMetric("stereographic", density, domain="extended_plane", cone_points=tuple(cones))

    def factor_grid(self, chart: str = "north", n: int = 64, half_width: float = 1.0) -> GridFunction:
        """Chart conformal factor rho on a grid: |ds|^2 = rho |dz|^2.

        Sphere charts are stereographic: ``"north"`` sends N to 0, ``"south"``
        sends S to 0. The torus chart ``"square"`` is [0, 1]^2.
        """
        if self.background.kind == "torus":
            if chart != "square":
                raise BadParameter("the torus has the single chart 'square'")
            return GridFunction.from_function(lambda z: self.factor(np.stack([z.real.ravel(), z.imag.ravel()], -1)).reshape(z.shape), 0.5 + 0.5j, 0.5, n)
        if chart not in ("north", "south"):
            raise BadParameter("sphere charts are 'north' and 'south'")
        sign = 1.0 if chart == "north" else -1.0

        def rho(z):
            r2 = np.abs(z) ** 2
            p = np.stack([2 * z.real, 2 * z.imag, sign * (1.0 - r2)], axis=-1) / (1.0 + r2)[..., None]
            return self.factor(p.reshape(-1, 3)).reshape(z.shape) * 4.0 / (1.0 + r2) ** 2

        return GridFunction.from_function(rho, 0j, half_width, n)


def build_alexandrov_metric(background, omega: PrescribedMeasure) -> SingularMetric:
    """Metric e^(2u) h whose curvature measure is ``omega``.

    ``omega`` must have total mass 2 pi chi and atoms below 2 pi; u is the
    potential of omega - K_h dA_h.
    """
    bg = as_background(background)
    if omega.background != bg:
        raise BadParameter("measure and background differ")
    omega.check_atoms()
    chi = bg.euler_characteristic
    res = gauss_bonnet_residual(omega.to_curvature_measure(), chi)
    if abs(res) > GAUSS_BONNET_TOL:
        raise GaussBonnetViolation(f"total curvature differs from 2 pi chi = {TWO_PI * chi:.9g} by {res:.3e}")
    mu = omega
    if bg.curvature != 0.0:
        mu = omega + PrescribedMeasure(bg, (), (UniformPart(-bg.curvature * bg.area),))
    u = potential_of_measure(bg, _merge_uniform(mu))
    return SingularMetric(bg, u, omega)


def _merge_uniform(mu: PrescribedMeasure) -> PrescribedMeasure:
    uni = [s for s in mu.smooth if isinstance(s, UniformPart)]
    rest = [s for s in mu.smooth if not isinstance(s, UniformPart)]
    if uni:
        m = math.fsum(s.mass for s in uni)
        if m != 0.0:
            rest.append(UniformPart(m))
    return PrescribedMeasure(mu.background, mu.atoms, tuple(rest))


# ---------------------------------------------------------------- distances

class _Paths:
    """Integrals of e^u along background geodesic segments.

    Sphere segments are minor great-circle arcs; torus segments are straight
    in unwrapped coordinates.
    """

    def __init__(self, metric: SingularMetric, piece: float):
        self.metric = metric
        self.bg = metric.background
        self.piece = piece
        self.sing = metric.u.singular_points

    def f(self, q: np.ndarray) -> np.ndarray:
        shape = q.shape[:-1]
        with np.errstate(over="ignore"):
            return np.exp(self.metric.u(q.reshape(-1, q.shape[-1]))).reshape(shape)

    def _frame(self, a, b):
        """Length and direction data of segments a -> b."""
        if self.bg.kind == "sphere":
            L = self.bg.distance(a, b)
            e = b - np.cos(L)[..., None] * a
            n = np.linalg.norm(e, axis=-1, keepdims=True)
            e = np.where(n > 0, e / np.where(n > 0, n, 1.0), 0.0)
            return L, e
        d = b - a
        return np.linalg.norm(d, axis=-1), d

    def point(self, a, L, e, t):
        """Points at fraction t along the segments (t broadcast on trailing axes)."""
        if self.bg.kind == "sphere":
            ang = L[..., None] * t
            return np.cos(ang)[..., None] * a[..., None, :] + np.sin(ang)[..., None] * e[..., None, :]
        return a[..., None, :] + t[..., None] * e[..., None, :]

    def closest(self, a, L, e, p):
        """Fraction of closest approach to p and its distance."""
        if self.bg.kind == "sphere":
            ang = np.arctan2(e @ p, a @ p)
            with np.errstate(invalid="ignore", divide="ignore"):
                t = np.clip(np.where(L > 0, ang / np.where(L > 0, L, 1.0), 0.0), 0.0, 1.0)
            q = np.cos(L * t)[..., None] * a + np.sin(L * t)[..., None] * e
            return t, self.bg.distance(q, p)
        mid = a + 0.5 * e
        pp = p + np.round(mid - p)
        L2 = np.sum(e * e, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.clip(np.where(L2 > 0, np.sum((pp - a) * e, axis=-1) / np.where(L2 > 0, L2, 1.0), 0.0), 0.0, 1.0)
        return t, np.linalg.norm(a + t[..., None] * e - pp, axis=-1)

    def many(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(-1, self.bg.dim)
        b = np.asarray(b, dtype=float).reshape(-1, self.bg.dim)
        L, e = self._frame(a, b)
        npieces = np.maximum(1, np.ceil(L / self.piece)).astype(int)
        near_any = np.zeros(len(a), dtype=bool)
        for p in self.sing:
            _, gap = self.closest(a, L, e, p)
            npieces = np.where(gap < 4.0 * np.maximum(L, self.piece), 4 * npieces, npieces)
            near_any |= gap < np.maximum(L, self.piece)
        out = np.zeros(len(a))
        for m in np.unique(npieces):
            sel = np.flatnonzero(npieces == m)
            j = np.arange(m)
            t = ((j[:, None] + GAUSS3_NODES[None, :]) / m).ravel()
            q = self.point(a[sel], L[sel], e[sel], t)
            vals = self.f(q)
            out[sel] = L[sel] * (vals @ np.tile(GAUSS3_WEIGHTS, m)) / m
        for i in np.flatnonzero(near_any):
            out[i] = self.one(a[i], b[i])
        return out

    def one(self, a, b) -> float:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        L, e = self._frame(a[None], b[None])
        L = float(L[0])
        if L == 0.0:
            return 0.0
        focus, gap = None, math.inf
        for p in self.sing:
            t, g = self.closest(a[None], np.array([L]), e, p)
            if g[0] < gap:
                focus, gap = float(t[0]), float(g[0])
        m = max(1, int(math.ceil(L / self.piece)))
        breaks = list(np.arange(1, m) / m)
        g = lambda t: self.f(self.point(a[None], np.array([L]), e, np.asarray(t, dtype=float))[0])
        if focus is not None and gap >= L:
            focus = None
        return L * segment_integral(g, focus=focus, gap=gap / L if focus is not None else 0.0, breaks=breaks)


_ICO: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and faces of the icosahedron subdivided ``level`` times, with a vertex at each pole."""
    if level in _ICO:
        return _ICO[level]
    if level == 0:
        z = 1.0 / math.sqrt(5.0)
        r = 2.0 / math.sqrt(5.0)
        up = [(r * math.cos(TWO_PI * k / 5), r * math.sin(TWO_PI * k / 5), z) for k in range(5)]
        lo = [(r * math.cos(TWO_PI * (k + 0.5) / 5), r * math.sin(TWO_PI * (k + 0.5) / 5), -z) for k in range(5)]
        V = np.array([(0.0, 0.0, 1.0)] + up + lo + [(0.0, 0.0, -1.0)])
        F = []
        for k in range(5):
            u0, u1 = 1 + k, 1 + (k + 1) % 5
            l0, l1 = 6 + k, 6 + (k + 1) % 5
            F += [(0, u0, u1), (u0, l0, u1), (u1, l0, l1), (11, l1, l0)]
        _ICO[0] = (V, np.array(F))
        return _ICO[0]
    V, F = icosphere(level - 1)
    edges = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mid = V[uniq[:, 0]] + V[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(F)
    m01, m12, m20 = (len(V) + inv[:nf], len(V) + inv[nf:2 * nf], len(V) + inv[2 * nf:])
    a, b, c = F[:, 0], F[:, 1], F[:, 2]
    F2 = np.concatenate([
        np.stack([a, m01, m20], 1), np.stack([b, m12, m01], 1),
        np.stack([c, m20, m12], 1), np.stack([m01, m12, m20], 1),
    ])
    _ICO[level] = (np.vstack([V, mid]), F2)
    return _ICO[level]


class DistanceGraph:
    """Geodesic graph on the background with edge weights int e^u dl_h.

    Sphere: icosphere vertices joined to every vertex within ``reach`` mean
    edge lengths. Torus: n x n grid with wraparound joined along all
    primitive offsets of sup-norm at most ``stencil``. Nodes on atoms are
    excluded.
    """

    def __init__(self, metric: SingularMetric, resolution: int, stencil: int = 3):
        bg = metric.background
        self.metric = metric
        self.bg = bg
        if bg.kind == "sphere":
            V, F = icosphere(resolution)
            h = float(np.mean(np.linalg.norm(V[F[:, 0]] - V[F[:, 1]], axis=1)))
            self.h = h
            self.radius = (stencil + 0.25) * h
            nodes = V
        else:
            n = resolution
            self.h = 1.0 / n
            self.radius = (stencil + 0.5) / n
            i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            nodes = np.stack([i.ravel() / n, j.ravel() / n], axis=-1)
        keep = np.ones(len(nodes), dtype=bool)
        for p in metric.u.singular_points:
            keep &= bg.distance(nodes, p) > 1e-12
        self.nodes = nodes[keep]
        self.paths = _Paths(metric, self.h)
        if bg.kind == "sphere":
            self.tree = cKDTree(self.nodes)
            pairs = self.tree.query_pairs(self.radius, output_type="ndarray")
            lo, hi = pairs[:, 0], pairs[:, 1]
            w = self.paths.many(self.nodes[lo], self.nodes[hi])
        else:
            self.tree = cKDTree(self.nodes, boxsize=[1.0, 1.0])
            index = -np.ones(n * n, dtype=np.int64)
            index[np.flatnonzero(keep)] = np.arange(int(keep.sum()))
            lo, hi, a, b = [], [], [], []
            I, J = i.ravel()[keep], j.ravel()[keep]
            src = index[I * n + J]
            for di, dj in _offsets(stencil):
                dst = index[((I + di) % n) * n + (J + dj) % n]
                ok = dst >= 0
                lo.append(src[ok])
                hi.append(dst[ok])
                a.append(self.nodes[src[ok]])
                b.append(self.nodes[src[ok]] + np.array([di, dj]) / n)
            lo, hi = np.concatenate(lo), np.concatenate(hi)
            w = self.paths.many(np.concatenate(a), np.concatenate(b))
        self.graph = MetricGraph.from_edges(len(self.nodes), lo, hi, w)

    def near(self, q: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        """Copy of q in the chart of ``anchor`` (unwrapped on the torus)."""
        if self.bg.kind == "sphere":
            return q
        return q + np.round(anchor - q)

    def attach(self, q) -> Attachment:
        q = self.bg.points(q)[0]
        idx = np.asarray(self.tree.query_ball_point(q, self.radius), dtype=np.int64)
        if idx.size:
            d = self.bg.distance(self.nodes[idx], q)
            k = int(np.argmin(d))
            if d[k] < 1e-12:
                return Attachment(idx, np.zeros(idx.size), node=int(idx[k]))
        else:
            _, k = self.tree.query(q)
            idx = np.array([k], dtype=np.int64)
        ends = np.array([self.near(self.nodes[k], q) for k in idx])
        w = self.paths.many(np.repeat(q[None, :], len(idx), axis=0), ends)
        return Attachment(idx, w)

    def polyline(self, nodes, x, y) -> np.ndarray:
        pts = [x if k == -1 else y if k == -2 else self.nodes[k] for k in nodes]
        out = [np.asarray(pts[0], dtype=float)]
        for p in pts[1:]:
            out.append(self.near(np.asarray(p, dtype=float), out[-1]))
        return np.array(out)


def _shortcut(paths: _Paths, pts: np.ndarray, max_angle: float = math.pi - 1e-3) -> float:
    """Greedy shortcutting of a polyline by direct segments; returns the new length."""
    m = len(pts) - 1
    if m <= 0:
        return 0.0
    steps = paths.many(pts[:-1], pts[1:])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    total, i = 0.0, 0
    while i < m:
        js = np.arange(i + 2, m + 1)
        if js.size and paths.bg.kind == "sphere":
            js = js[paths.bg.distance(pts[js], pts[i]) < max_angle]
        if js.size:
            direct = paths.many(np.repeat(pts[i][None, :], js.size, axis=0), pts[js])
            ok = np.flatnonzero(direct <= cum[js] - cum[i])
            if ok.size:
                total += float(direct[ok[-1]])
                i = int(js[ok[-1]])
                continue
        total += float(steps[i])
        i += 1
    return total


_GRAPHS: "weakref.WeakKeyDictionary[SingularMetric, dict]" = weakref.WeakKeyDictionary()


def distance_graph(metric: SingularMetric, resolution: int, stencil: int = 3) -> DistanceGraph:
    cache = _GRAPHS.setdefault(metric, {})
    key = (resolution, stencil)
    if key not in cache:
        cache[key] = DistanceGraph(metric, resolution, stencil)
    return cache[key]


DEFAULT_LEVEL = 4
DEFAULT_GRID = 64


def resolution_ladder(bg: Background, resolution: int | None) -> list[int]:
    """Refinement ladder ending at ``resolution``: icosphere levels or nested torus grids."""
    if bg.kind == "sphere":
        L = DEFAULT_LEVEL if resolution is None else int(resolution)
        if L < 1:
            raise ResolutionTooLow(f"icosphere level {L} < 1")
        return list(range(max(1, L - 2), L + 1))
    n = DEFAULT_GRID if resolution is None else int(resolution)
    if n < 8:
        raise ResolutionTooLow(f"torus grid {n} < 8")
    out = [n]
    while out[-1] % 2 == 0 and out[-1] // 2 >= 16 and len(out) < 3:
        out.append(out[-1] // 2)
    return out[::-1]


def _check_point(metric: SingularMetric, x) -> np.ndarray:
    return metric.background.points(x)[0]


def _graph_distance(metric: SingularMetric, x, y, res: int, stencil: int) -> float:
    dg = distance_graph(metric, res, stencil)
    length, nodes = dg.graph.path(dg.attach(x), dg.attach(y))
    return min(length, _shortcut(dg.paths, dg.polyline(nodes, x, y)))


def metric_distance(metric: SingularMetric, x, y, resolution: int | None = None, stencil: int = 3) -> float:
    """Upper bound on d_{h,u}(x, y) from graph shortest paths.

    ``resolution`` is the icosphere level (sphere, default 4) or grid size
    (torus, default 64). The reported value is the minimum over a short
    refinement ladder, so refining never increases it.
    """
    x = _check_point(metric, x)
    y = _check_point(metric, y)
    ladder = resolution_ladder(metric.background, resolution)
    if metric.background.distance(x, y) < 1e-15:
        return 0.0
    return min(_graph_distance(metric, x, y, r, stencil) for r in ladder)


class SingularMetricProbe:
    """Circle probes for :func:`alexsurf.geodesics.geodesic_circle_length` on a singular metric."""

    def __init__(self, metric: SingularMetric, resolution: int | None = None, stencil: int = 3):
        self.metric = metric
        self.bg = metric.background
        self.resolution = resolution_ladder(self.bg, resolution)[-1]
        self.stencil = stencil

    def _graph(self) -> DistanceGraph:
        return distance_graph(self.metric, self.resolution, self.stencil)

    def distance_from(self, center):
        c = _check_point(self.metric, center)
        dg = self._graph()
        fld = dg.graph.field(dg.attach(c))

        def dist(p):
            p = _check_point(self.metric, p)
            a = dg.attach(p)
            best = float(fld[a.node]) if a.node is not None else float(np.min(fld[a.nodes] + a.weights))
            if self.bg.distance(p, c) < 0.5 * self.bg.injectivity_radius:
                best = min(best, dg.paths.one(c, dg.near(p, c)))
            return best

        return dist

    def ray(self, center, angle, t):
        return self.bg.exp(_check_point(self.metric, center), t, angle)

    def ray_reach(self, center):
        return 0.45 * self.bg.injectivity_radius

    def chord(self, p, q):
        p = _check_point(self.metric, p)
        q = _check_point(self.metric, q)
        return self._graph().paths.one(p, self._graph().near(q, p))

    def other_singular_points(self, center):
        c = _check_point(self.metric, center)
        return [p for p in self.metric.u.singular_points if self.bg.distance(p, c) > 1e-12]


def cone_angle_probe(metric: SingularMetric, site, resolution: int | None = None, n_rays: int = 32, fraction: float = 1.0 / 16.0) -> float:
    """Circle length / radius at ``site`` for a radius ``fraction`` of the nearest singular distance.

    Without other singular points the antipodal point (sphere) or the
    half-period translate (torus) sets the scale.
    """
    from .geodesics import geodesic_circle_length

    probe = SingularMetricProbe(metric, resolution)
    c = _check_point(metric, site)
    dist = probe.distance_from(c)
    others = probe.other_singular_points(c)
    if not others:
        others = [-c] if metric.background.kind == "sphere" else [c + 0.5]
    r = fraction * min(dist(p) for p in others)
    return geodesic_circle_length(probe, c, r, n_rays) / r


def verify_metric(metric: SingularMetric, resolution: int | None = None, n_rays: int = 32, n_grid: int = 48) -> dict:
    """Numerical checks that the metric carries its target curvature measure.

    Reports the Gauss-Bonnet residual of omega, the cone angle measured by
    circle probes at every atom against 2 pi - mass, and the smooth
    curvature density e^(2u) K recovered from the chart factor against the
    smooth density of omega, away from atoms.
    """
    bg = metric.background
    omega = metric.omega
    report: dict[str, Any] = {"background": bg.kind}
    if omega is not None:
        report["gauss_bonnet_residual"] = gauss_bonnet_residual(omega.to_curvature_measure(), bg.euler_characteristic)
    cones = []
    for p, m in zip(metric.u.atom_points, metric.u.atom_masses):
        if abs(m) <= SINGULAR_THRESHOLD:
            continue
        theta = cone_angle_probe(metric, p, resolution, n_rays)
        cones.append({"point": p.tolist(), "mass": float(m), "expected_angle": float(TWO_PI - m), "measured_angle": theta})
    report["cones"] = cones
    if omega is not None:
        report["smooth_density_error"] = _smooth_check(metric, n_grid)
    return report


def _smooth_check(metric: SingularMetric, n: int) -> float:
    bg = metric.background
    if bg.kind == "torus":
        g = GridFunction.from_function(lambda z: metric.u(np.stack([z.real.ravel(), z.imag.ravel()], -1)).reshape(z.shape), 0.5 + 0.5j, 0.5, n)
        pts = np.stack([g.z().real.ravel(), g.z().imag.ravel()], -1)
        charts = [(g, pts)]
    else:
        charts = []
        for sign in (1.0, -1.0):
            def to_sphere(z, sign=sign):
                r2 = np.abs(z) ** 2
                return (np.stack([2 * z.real, 2 * z.imag, sign * (1.0 - r2)], axis=-1) / (1.0 + r2)[..., None]).reshape(-1, 3)
            g = GridFunction.from_function(
                lambda z, f=to_sphere: metric.u(f(z)).reshape(z.shape) + np.log(2.0 / (1.0 + np.abs(z) ** 2)), 0j, 1.0, n)
            charts.append((g, to_sphere(g.z())))
    # finite differences of the log singularity need a few grid steps of room
    room = 0.4 if bg.kind == "sphere" else 0.2
    worst = 0.0
    for g, pts in charts:
        mask = np.zeros(g.values.shape, dtype=bool)
        for p in metric.u.singular_points:
            mask |= (bg.distance(pts, p) < room).reshape(mask.shape)
        for s in metric.omega.smooth:
            if isinstance(s, BumpPart):
                mask |= (bg.distance(pts, np.asarray(s.site)) < s.epsilon + room).reshape(mask.shape)
        K = smooth_curvature_from_factor(g, 0.0, mask, max_masked=0.6)
        chart_factor = np.exp(2.0 * g.values)
        dens = (K.values * chart_factor).ravel()
        if bg.kind == "sphere":
            # per chart area -> per background area
            dens = dens / (4.0 / (1.0 + np.abs(g.z().ravel()) ** 2) ** 2)
        target = metric.omega.density(pts)
        ok = np.isfinite(dens)
        if ok.any():
            worst = max(worst, float(np.max(np.abs(dens[ok] - target[ok]))))
    return worst

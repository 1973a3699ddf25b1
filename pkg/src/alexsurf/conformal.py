"""Singular conformal metrics rho(z)|dz|^2 on planar charts.

Distances are shortest paths on a square grid graph with a wide stencil
(all primitive offsets up to ``stencil`` cells), each edge weighted by the
integral of sqrt(rho) along the segment. The graph path is then shortened
by straight chart segments wherever that is cheaper, so the result is the
length of an explicit path: an upper bound on the true distance. Values
are the running minimum over a ladder of nested grids.

The extended plane is covered by two charts z and w = 1/z with
rho_w(w) = rho_z(1/w) |w|^-4, stitched across the annulus where both
charts are valid.
"""

from __future__ import annotations

import csv
import io
import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree

from ._graph import Attachment, MetricGraph
from .curvature import CurvatureMeasure, EdgePart, FacePart
from .errors import BadParameter, MaskTooLarge, PointOutsideDomain, SingularEndpoint
from .quadrature import GAUSS3_NODES, GAUSS3_WEIGHTS, circle_crossings, closest_param, segment_integral

ChartPoint = tuple[str, complex]

#: chart half-width used for both charts of the extended plane
EXTENDED_CHART_RADIUS = 1.25


@dataclass(frozen=True, eq=False)
class ConformalChartMetric:
    """A metric rho(z)|dz|^2 on a planar domain.

    ``domain`` is one of ``"plane"``, ``"disk"`` (|z| < radius),
    ``"punctured_disk"`` (0 < |z| < radius) or ``"extended_plane"``.
    ``cone_points`` are singular points at finite distance (allowed as
    endpoints); ``cusps`` are singular points at infinite distance;
    ``seams`` are radii of circles across which rho jumps. On the extended
    plane a cone point may be given as ``complex("inf")``.
    """

    name: str
    density: Callable[[np.ndarray], np.ndarray]
    domain: str = "plane"
    radius: float = math.inf
    cone_points: tuple[complex, ...] = ()
    cusps: tuple[complex, ...] = ()
    seams: tuple[float, ...] = ()
    measure: CurvatureMeasure | None = None
    params: dict = field(default_factory=dict)
    curvature: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def singular_points(self) -> tuple[complex, ...]:
        return self.cone_points + self.cusps

    def sqrt_density(self, chart: str, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=complex)
        if chart == "z":
            return np.sqrt(self.density(q))
        # w = 0 is the point at infinity: take the limit along a tiny w
        q = np.where(q == 0, 1e-30 + 0j, q)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.sqrt(self.density(1.0 / q)) / np.abs(q) ** 2

    def contains(self, z: complex) -> bool:
        r = abs(z)
        if self.domain in ("plane", "extended_plane"):
            return True
        if self.domain == "disk":
            return r < self.radius
        return 0.0 < r < self.radius


# ---------------------------------------------------------------- gallery

def _atom_measure(mass: float) -> CurvatureMeasure:
    if mass == 0.0:
        return CurvatureMeasure()
    return CurvatureMeasure.from_atoms([("origin", mass)], points=np.zeros((1, 2)))


def _unit_circle(t):
    a = 2.0 * np.pi * np.asarray(t)
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def _disk_sampler(weight: Callable[[np.ndarray], np.ndarray], r0: float, r1: float) -> Callable:
    """Quadrature on the annulus r0 < |z| < r1 weighted by ``weight`` (normalised)."""
    from .quadrature import gauss_legendre

    def sampler(n):
        r, wr = gauss_legendre(max(n, 2), r0, r1)
        a = 2.0 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        R, A = np.meshgrid(r, a, indexing="ij")
        z = R * np.exp(1j * A)
        w = (wr[:, None] * R) * weight(z)
        w = (w / w.sum()).ravel()
        return np.stack([z.real.ravel(), z.imag.ravel()], axis=1), w

    return sampler


def make_example_metric(kind: str, **params) -> ConformalChartMetric:
    """Gallery of singular conformal metrics with their curvature measures.

    ``cone(theta)``: rho = |z|^(2 beta), beta = theta/2pi - 1, one atom
    -2 pi beta at 0. ``hemisphere_cylinder``: a unit hemisphere (|z| < 1)
    capped onto a half cylinder (|z| > 1). ``glued_disks``: two flat unit
    disks glued along their rims, on the extended plane. ``pseudosphere``:
    rho = 1/(|z| log|z|)^2 on the punctured unit disk, curvature -1 with a
    cusp at the origin.
    """
    if kind == "cone":
        theta = float(params.get("theta", 2 * np.pi))
        if not theta > 0 or not math.isfinite(theta):
            raise BadParameter(f"cone angle must be positive, got {theta}")
        beta = theta / (2 * np.pi) - 1.0

        def density(z, beta=beta):
            with np.errstate(divide="ignore"):
                return np.abs(z) ** (2 * beta)

        return ConformalChartMetric(
            name=f"cone(theta={theta:.9g})",
            density=density,
            domain="plane",
            cone_points=(0j,) if beta != 0 else (),
            measure=_atom_measure(-2 * np.pi * beta),
            params={"theta": theta, "beta": beta},
            curvature=lambda z: np.zeros(np.shape(z)),
        )
    if kind == "hemisphere_cylinder":

        def density(z):
            r2 = np.abs(z) ** 2
            with np.errstate(divide="ignore"):
                return np.where(r2 <= 1.0, 4.0 / (1.0 + r2) ** 2, 1.0 / r2)

        # the smooth curvature 1 on the hemisphere carries its area, 2 pi
        cap = FacePart("hemisphere", 2 * np.pi, _disk_sampler(lambda z: 4.0 / (1.0 + np.abs(z) ** 2) ** 2, 0.0, 1.0))
        return ConformalChartMetric(
            name="hemisphere_cylinder",
            density=density,
            domain="plane",
            seams=(1.0,),
            measure=CurvatureMeasure(faces=(cap,)),
            curvature=lambda z: np.where(np.abs(z) < 1.0, 1.0, 0.0),
        )
    if kind == "glued_disks":

        def density(z):
            r = np.abs(z)
            with np.errstate(divide="ignore"):
                return np.where(r <= 1.0, 1.0, r ** -4.0)

        rim = EdgePart("rim", 2.0, 2 * np.pi, _unit_circle)
        return ConformalChartMetric(
            name="glued_disks",
            density=density,
            domain="extended_plane",
            seams=(1.0,),
            measure=CurvatureMeasure(edges=(rim,)),
            curvature=lambda z: np.zeros(np.shape(z)),
        )
    if kind == "pseudosphere":
        cell = float(params.get("cell_radius", 0.5))
        if not 0 < cell < 1:
            raise BadParameter("cell_radius must lie in (0, 1)")

        def density(z):
            r = np.abs(z)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = 1.0 / (r * np.log(r)) ** 2
            return np.where((r > 0) & (r < 1), out, np.inf)

        # area of the cell 0 < |z| < cell: 2 pi / |log cell|
        area = 2 * np.pi / abs(math.log(cell))
        smooth = FacePart("cell", -area, _disk_sampler(density, 0.0, cell))
        cusp = CurvatureMeasure.from_atoms([("origin", 2 * np.pi)], points=np.zeros((1, 2)))
        return ConformalChartMetric(
            name="pseudosphere",
            density=density,
            domain="punctured_disk",
            radius=1.0,
            cusps=(0j,),
            measure=cusp + CurvatureMeasure(faces=(smooth,)),
            params={"cell_radius": cell},
            curvature=lambda z: np.full(np.shape(z), -1.0),
        )
    raise BadParameter(f"unknown gallery entry {kind!r}")


GALLERY = ("cone", "hemisphere_cylinder", "glued_disks", "pseudosphere")


# ---------------------------------------------------------------- segments

def _offsets(stencil: int) -> list[tuple[int, int]]:
    out = []
    for i in range(0, stencil + 1):
        for j in range(-stencil, stencil + 1):
            if (i == 0 and j <= 0) or math.gcd(i, abs(j)) != 1:
                continue
            out.append((i, j))
    return out


class _Segments:
    """Integrals of sqrt(rho) along straight chart segments."""

    def __init__(self, metric: ConformalChartMetric, chart: str, piece: float):
        self.metric = metric
        self.chart = chart
        self.piece = piece
        if chart == "z":
            self.cones = [p for p in metric.cone_points if np.isfinite(p)]
            self.cusps = list(metric.cusps)
            self.seams = list(metric.seams)
        else:
            # in the w chart only the images of finite singular points matter
            # a cone point given as infinity sits at w = 0
            self.cones = [1.0 / p if np.isfinite(p) else 0j for p in metric.cone_points if p != 0]
            self.cusps = [1.0 / p for p in metric.cusps if p != 0]
            self.seams = [1.0 / r for r in metric.seams]

    def f(self, q):
        return self.metric.sqrt_density(self.chart, q)

    def many(self, za: np.ndarray, zb: np.ndarray) -> np.ndarray:
        """Vectorised integrals; segments near singular points are redone one by one."""
        za = np.asarray(za, dtype=complex).ravel()
        zb = np.asarray(zb, dtype=complex).ravel()
        d = zb - za
        L = np.abs(d)
        npieces = np.maximum(1, np.ceil(L / self.piece)).astype(int)
        # segments a few lengths away from a cone point get finer pieces
        for p in self.cones:
            gap = _gaps(za, zb, p)
            npieces = np.where(gap < 4.0 * np.maximum(L, self.piece), 4 * npieces, npieces)
        out = np.zeros(za.size)
        # split at seam crossings, then into pieces no longer than ``piece``
        cuts = [np.zeros(za.size), np.ones(za.size)]
        for r in self.seams:
            c = circle_crossings(za, zb, r)
            cuts.extend([c[:, 0], c[:, 1]])
        C = np.sort(np.stack(cuts, axis=1), axis=1)  # NaN sort last
        for k in range(C.shape[1] - 1):
            a, b = C[:, k], C[:, k + 1]
            ok = np.isfinite(a) & np.isfinite(b) & (b > a)
            if not ok.any():
                continue
            idx = np.flatnonzero(ok)
            for m in np.unique(npieces[idx]):
                sel = idx[npieces[idx] == m]
                a_s, b_s = a[sel], b[sel]
                j = np.arange(m)
                lo = a_s[:, None] + (b_s - a_s)[:, None] * j[None, :] / m
                hi = a_s[:, None] + (b_s - a_s)[:, None] * (j[None, :] + 1) / m
                t = lo[..., None] + (hi - lo)[..., None] * GAUSS3_NODES
                q = za[sel, None, None] + d[sel, None, None] * t
                vals = self.f(q)
                out[sel] += L[sel] * np.sum((hi - lo)[..., None] * GAUSS3_WEIGHTS * vals, axis=(1, 2))
        for p in self.cusps:
            gap = _gaps(za, zb, p)
            out[gap < 0.5 * self.piece] = np.inf
        for p in self.cones:
            gap = _gaps(za, zb, p)
            near = np.flatnonzero(gap < np.maximum(L, self.piece))
            for i in near:
                out[i] = self.one(za[i], zb[i])
        return out

    def one(self, za: complex, zb: complex) -> float:
        L = abs(zb - za)
        if L == 0.0:
            return 0.0
        for p in self.cusps:
            t, gap = closest_param(za, zb, p)
            if gap < 0.5 * self.piece:
                return math.inf
        focus, gap = None, math.inf
        for p in self.cones:
            t, g = closest_param(za, zb, p)
            if g < gap:
                focus, gap = t, g
        breaks = []
        for r in self.seams:
            c = circle_crossings(np.array([za]), np.array([zb]), r)[0]
            breaks.extend(x for x in c if np.isfinite(x))
        m = max(1, int(math.ceil(L / self.piece)))
        breaks.extend(np.arange(1, m) / m)
        g = lambda t: self.f(za + (zb - za) * t)
        if focus is not None and gap >= L:
            focus = None
        return L * segment_integral(g, focus=focus, gap=gap / L if focus is not None else 0.0, breaks=breaks)


def _gaps(za, zb, p) -> np.ndarray:
    d = zb - za
    L2 = np.abs(d) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.clip(np.where(L2 > 0, ((p - za) * d.conj()).real / L2, 0.0), 0.0, 1.0)
    return np.abs(za + t * d - p)


# ---------------------------------------------------------------- chart graphs

@dataclass
class _Chart:
    name: str
    h: float
    half_width: float
    z: np.ndarray  # node positions (kept nodes only)
    offset: int  # id of the first node in the global graph
    tree: cKDTree
    seg: _Segments


class ChartGraph:
    """Grid graph over one or two charts of a conformal metric."""

    def __init__(self, metric: ConformalChartMetric, n: int, half_width: float, stencil: int = 4):
        if n < 2:
            raise BadParameter("grid needs n >= 2")
        self.metric = metric
        self.n = n
        self.stencil = stencil
        charts = ["z", "w"] if metric.domain == "extended_plane" else ["z"]
        if metric.domain == "extended_plane":
            half_width = EXTENDED_CHART_RADIUS
        self.half_width = half_width
        lo, hi, w = [], [], []
        self.charts: dict[str, _Chart] = {}
        offset = 0
        for name in charts:
            ch, (a, b, c) = self._build_chart(name, n, half_width, offset)
            self.charts[name] = ch
            lo.append(a)
            hi.append(b)
            w.append(c)
            offset += ch.z.size
        if len(charts) == 2:
            a, b, c = self._stitch()
            lo.append(a)
            hi.append(b)
            w.append(c)
        self.graph = MetricGraph.from_edges(offset, np.concatenate(lo), np.concatenate(hi), np.concatenate(w))

    def _keep(self, name, z):
        m = self.metric
        r = np.abs(z)
        keep = np.isfinite(z)
        if m.domain == "extended_plane":
            keep &= r <= EXTENDED_CHART_RADIUS * (1 + 1e-12)
        elif m.domain in ("disk", "punctured_disk"):
            keep &= r < m.radius * (1 - 1e-9)
        for p in (m.cusps if name == "z" else [1 / p for p in m.cusps if p != 0]):
            keep &= np.abs(z - p) > 1e-12
        return keep

    def _build_chart(self, name, n, half_width, offset):
        h = half_width / n
        k = np.arange(-n, n + 1)
        I, J = np.meshgrid(k, k, indexing="ij")
        Z = h * (I + 1j * J)
        keep = self._keep(name, Z)
        ids = np.full(Z.shape, -1, dtype=np.int64)
        ids[keep] = offset + np.arange(int(keep.sum()))
        seg = _Segments(self.metric, name, h)
        lo, hi, za, zb = [], [], [], []
        N = 2 * n + 1
        for (a, b) in _offsets(self.stencil):
            i0, i1 = max(0, -a), min(N, N - a)
            j0, j1 = max(0, -b), min(N, N - b)
            A = ids[i0:i1, j0:j1]
            B = ids[i0 + a:i1 + a, j0 + b:j1 + b]
            ok = (A >= 0) & (B >= 0)
            lo.append(A[ok])
            hi.append(B[ok])
            za.append(Z[i0:i1, j0:j1][ok])
            zb.append(Z[i0 + a:i1 + a, j0 + b:j1 + b][ok])
        za = np.concatenate(za)
        zb = np.concatenate(zb)
        w = seg.many(za, zb)
        zs = Z[keep]
        ch = _Chart(name, h, half_width, zs, offset, cKDTree(np.column_stack([zs.real, zs.imag])), seg)
        return ch, (np.concatenate(lo), np.concatenate(hi), w)

    def _stitch(self):
        cz, cw = self.charts["z"], self.charts["w"]
        R = EXTENDED_CHART_RADIUS
        sel = np.flatnonzero((np.abs(cz.z) >= 1.0 / R) & (cz.z != 0))
        img = 1.0 / cz.z[sel]
        nbrs = cw.tree.query_ball_point(np.column_stack([img.real, img.imag]), r=2.0 * cw.h)
        lo, hi, a, b = [], [], [], []
        for s, im, nb in zip(sel, img, nbrs):
            for j in nb:
                lo.append(cz.offset + s)
                hi.append(cw.offset + j)
                a.append(im)
                b.append(cw.z[j])
        w = cw.seg.many(np.array(a), np.array(b))
        return np.array(lo, dtype=np.int64), np.array(hi, dtype=np.int64), w

    # -- points

    def chart_points(self, p: ChartPoint) -> list[ChartPoint]:
        """All chart representations of a point that lie inside a chart grid."""
        name, q = p
        out = [(name, q)] if abs(q) <= self.half_width * (1 + 1e-12) else []
        if "w" in self.charts and q != 0:
            other = ("w" if name == "z" else "z", 1.0 / q)
            if abs(other[1]) <= self.half_width * (1 + 1e-12):
                out.append(other)
        return out

    def attach(self, p: ChartPoint) -> Attachment:
        nodes, weights = [], []
        radius = (self.stencil + 0.5) * min(c.h for c in self.charts.values())
        for name, q in self.chart_points(p):
            ch = self.charts[name]
            d, j = ch.tree.query([q.real, q.imag])
            if d < 1e-12 * max(1.0, abs(q)):
                return Attachment(np.zeros(0, dtype=np.int64), np.zeros(0), node=int(ch.offset + j))
            nb = np.array(ch.tree.query_ball_point([q.real, q.imag], r=(self.stencil + 0.5) * ch.h), dtype=np.int64)
            if nb.size == 0:
                continue
            w = ch.seg.many(np.full(nb.size, q), ch.z[nb])
            nodes.append(ch.offset + nb)
            weights.append(w)
        if not nodes:
            raise PointOutsideDomain(f"point {p} is outside the grid")
        return Attachment(np.concatenate(nodes), np.concatenate(weights))

    def node_point(self, k: int) -> ChartPoint:
        for ch in self.charts.values():
            if ch.offset <= k < ch.offset + ch.z.size:
                return (ch.name, complex(ch.z[k - ch.offset]))
        raise IndexError(k)


_GRAPHS: "weakref.WeakKeyDictionary[ConformalChartMetric, dict]" = weakref.WeakKeyDictionary()


def chart_graph(metric: ConformalChartMetric, n: int, half_width: float, stencil: int = 4) -> ChartGraph:
    per = _GRAPHS.setdefault(metric, {})
    key = (n, round(half_width, 12), stencil)
    if key not in per:
        per[key] = ChartGraph(metric, n, half_width, stencil)
    return per[key]


# ---------------------------------------------------------------- distances

def as_chart_point(metric: ConformalChartMetric, p) -> ChartPoint:
    """Normalise a complex number (``inf`` allowed on the extended plane) or a (chart, value) pair."""
    if isinstance(p, tuple):
        name, q = p
        return (name, complex(q))
    q = complex(p)
    if metric.domain == "extended_plane":
        if not np.isfinite(q):
            return ("w", 0j)
        if abs(q) > 1.0:
            return ("w", 1.0 / q)
    elif not np.isfinite(q):
        raise PointOutsideDomain("infinity is not part of this domain")
    return ("z", q)


def _check_endpoint(metric: ConformalChartMetric, p: ChartPoint) -> None:
    name, q = p
    z = q if name == "z" else (1.0 / q if q != 0 else complex("inf"))
    if np.isfinite(z) and not metric.contains(z):
        raise PointOutsideDomain(f"{z} lies outside the domain of {metric.name}")
    for c in metric.cusps:
        if np.isfinite(z) and abs(z - c) < 1e-12:
            raise SingularEndpoint(f"{z} is a cusp at infinite distance")
    if np.isfinite(z) and z not in metric.cone_points:
        with np.errstate(all="ignore"):
            val = float(metric.density(np.array([z]))[0])
        if not np.isfinite(val):
            raise SingularEndpoint(f"density is infinite at {z}")
    if name == "w" and q == 0 and metric.domain == "extended_plane":
        with np.errstate(all="ignore"):
            val = float(metric.sqrt_density("w", np.array([0j]))[0])
        if not np.isfinite(val):
            raise SingularEndpoint("infinity is at infinite distance")


def _auto_half_width(metric: ConformalChartMetric, pts: Sequence[ChartPoint]) -> float:
    if metric.domain == "extended_plane":
        return EXTENDED_CHART_RADIUS
    if metric.domain in ("disk", "punctured_disk"):
        return metric.radius
    r = max([abs(q) for _, q in pts] + [abs(p) for p in metric.singular_points] + [0.5])
    return 2.0 * r


def _path_segments(cg: ChartGraph, nodes, src: ChartPoint, dst: ChartPoint):
    """Chart polyline of a graph path, as maximal runs within one chart."""
    pts = []
    for k in nodes:
        p = src if k == -1 else dst if k == -2 else cg.node_point(k)
        pts.append(p)
    # re-express points so consecutive entries share a chart where possible
    runs = [[pts[0]]]
    for p in pts[1:]:
        cur = runs[-1][-1]
        if p[0] == cur[0]:
            runs[-1].append(p)
            continue
        alt = [q for q in cg.chart_points(p) if q[0] == cur[0]]
        if alt:
            runs[-1].append(alt[0])
        else:
            runs.append([p])
    return runs


def _shortcut(seg: _Segments, pts: list[complex]) -> float:
    """Greedy shortcutting of a chart polyline; returns the shortened length."""
    pts = np.asarray(pts, dtype=complex)
    m = len(pts) - 1
    if m <= 0:
        return 0.0
    steps = seg.many(pts[:-1], pts[1:])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    total = 0.0
    i = 0
    while i < m:
        js = np.arange(i + 2, m + 1)
        best = i + 1
        if js.size:
            direct = seg.many(np.full(js.size, pts[i]), pts[js])
            ok = np.flatnonzero(direct <= cum[js] - cum[i])
            if ok.size:
                best = int(js[ok[-1]])
                total += float(direct[ok[-1]])
                i = best
                continue
        total += float(steps[i])
        i = best
    return total


def _graph_distance(metric, p1: ChartPoint, p2: ChartPoint, n: int, half_width: float, stencil: int) -> float:
    cg = chart_graph(metric, n, half_width, stencil)
    a1, a2 = cg.attach(p1), cg.attach(p2)
    length, nodes = cg.graph.path(a1, a2)
    runs = _path_segments(cg, nodes, p1, p2)
    total = 0.0
    for r_i, run in enumerate(runs):
        total += _shortcut(cg.charts[run[0][0]].seg, [q for _, q in run])
        if r_i + 1 < len(runs):
            nxt = runs[r_i + 1][0]
            # chart change along a stitch edge, measured in the w chart
            a = run[-1] if run[-1][0] == "w" else ("w", 1.0 / run[-1][1])
            b = nxt if nxt[0] == "w" else ("w", 1.0 / nxt[1])
            total += cg.charts["w"].seg.one(a[1], b[1])
    return min(total, length)


def grid_ladder(n: int, coarsest: int = 8) -> list[int]:
    """Nested grid sizes n, n/2, ... down to ``coarsest`` (ascending)."""
    out = [n]
    while out[-1] % 2 == 0 and out[-1] // 2 >= coarsest:
        out.append(out[-1] // 2)
    return out[::-1]


def conformal_distance(metric: ConformalChartMetric, z1, z2, n: int = 64, half_width: float | None = None, stencil: int = 4) -> float:
    """Upper bound on the distance between two chart points.

    ``n`` is the number of grid cells per half-width of the finest grid;
    the value is the minimum over the ladder ``grid_ladder(n)`` so doubling
    ``n`` never increases it. For the distances of a whole sample use
    :func:`conformal_distance_matrix`, which also satisfies the triangle
    inequality.
    """
    p1, p2 = as_chart_point(metric, z1), as_chart_point(metric, z2)
    _check_endpoint(metric, p1)
    _check_endpoint(metric, p2)
    if p1 == p2:
        return 0.0
    hw = half_width if half_width is not None else _auto_half_width(metric, [p1, p2])
    best = math.inf
    for m in grid_ladder(n):
        best = min(best, _graph_distance(metric, p1, p2, m, hw, stencil))
    return best


def metric_closure(d: np.ndarray) -> np.ndarray:
    """Smallest pseudometric below a matrix of pairwise upper bounds.

    Each entry is an upper bound given by the length of some curve, and
    concatenated curves are curves, so the closure is still an upper bound.
    """
    d = np.asarray(d, dtype=float)
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return shortest_path(d, method="FW", directed=False)


def conformal_distance_matrix(metric: ConformalChartMetric, points, n: int = 64, half_width: float | None = None, stencil: int = 4) -> np.ndarray:
    """Pairwise distances of a point sample that form a pseudometric.

    Independent pair estimates are upper bounds with different errors and
    need not satisfy the triangle inequality; the metric closure over the
    sample does, and can only lower (improve) each entry. All pairs share
    one grid extent.
    """
    pts = [as_chart_point(metric, p) for p in points]
    for p in pts:
        _check_endpoint(metric, p)
    hw = half_width if half_width is not None else _auto_half_width(metric, pts)
    k = len(pts)
    d = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            d[i, j] = d[j, i] = conformal_distance(metric, pts[i], pts[j], n, hw, stencil)
    return metric_closure(d)


class ChartProbe:
    """Circle probes for :func:`alexsurf.geodesics.geodesic_circle_length` on a chart metric."""

    def __init__(self, metric: ConformalChartMetric, n: int = 64, half_width: float | None = None, stencil: int = 4):
        self.metric = metric
        self.n = n
        self.half_width = half_width
        self.stencil = stencil

    def _graph(self, center):
        hw = self.half_width if self.half_width is not None else _auto_half_width(self.metric, [as_chart_point(self.metric, center)])
        return chart_graph(self.metric, self.n, hw, self.stencil)

    def distance_from(self, center):
        c = as_chart_point(self.metric, center)
        _check_endpoint(self.metric, c)
        cg = self._graph(center)
        fld = cg.graph.field(cg.attach(c))
        seg = cg.charts[c[0]].seg

        def dist(p):
            q = as_chart_point(self.metric, p)
            a = cg.attach(q)
            best = float(fld[a.node]) if a.node is not None else float(np.min(fld[a.nodes] + a.weights))
            if q[0] == c[0] and abs(q[1] - c[1]) < (self.stencil + 1) * cg.charts[c[0]].h:
                best = min(best, seg.one(c[1], q[1]))
            return best

        return dist

    def ray(self, center, angle, t):
        name, q = as_chart_point(self.metric, center)
        return (name, q + t * complex(math.cos(angle), math.sin(angle)))

    def ray_reach(self, center):
        name, q = as_chart_point(self.metric, center)
        cg = self._graph(center)
        return 0.9 * (cg.half_width - abs(q))

    def chord(self, p, q):
        p, q = as_chart_point(self.metric, p), as_chart_point(self.metric, q)
        if p[0] != q[0]:
            q = ("w" if q[0] == "z" else "z", 1.0 / q[1])
        cg = self._graph(p)
        return cg.charts[p[0]].seg.one(p[1], q[1])

    def other_singular_points(self, center):
        c = as_chart_point(self.metric, center)
        z = c[1] if c[0] == "z" else (1.0 / c[1] if c[1] != 0 else None)
        out = []
        for p in self.metric.cone_points:
            if not np.isfinite(p):
                if z is not None:
                    out.append(("w", 0j))
            elif z is None or abs(p - z) > 1e-12:
                out.append(("z", p))
        return out


# ---------------------------------------------------------------- grid functions

@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on the grid x0 + i h, y0 + j h (i < nx, j < ny); ``values[i, j]``."""

    x0: float
    y0: float
    h: float
    values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.values.shape
        x = self.x0 + self.h * np.arange(nx)
        y = self.y0 + self.h * np.arange(ny)
        return np.meshgrid(x, y, indexing="ij")

    def z(self) -> np.ndarray:
        X, Y = self.coords()
        return X + 1j * Y

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], center: complex, half_width: float, n: int) -> "GridFunction":
        """Sample ``f(z)`` on the square of given half-width, 2n+1 nodes per side."""
        h = half_width / n
        x0, y0 = center.real - half_width, center.imag - half_width
        g = cls(x0, y0, h, np.zeros((2 * n + 1, 2 * n + 1)))
        with np.errstate(all="ignore"):
            vals = np.asarray(f(g.z()), dtype=float)
        return cls(x0, y0, h, vals)

    def to_csv(self, name: str = "value") -> str:
        X, Y = self.coords()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", name])
        for x, y, v in zip(X.ravel(), Y.ravel(), self.values.ravel()):
            w.writerow([f"{x:.9g}", f"{y:.9g}", f"{v:.9g}"])
        return buf.getvalue()


def log_factor(metric: ConformalChartMetric, half_width: float = 2.0, n: int = 64, center: complex = 0j) -> GridFunction:
    """u = log(rho)/2 sampled on a grid, so that rho|dz|^2 = e^(2u)|dz|^2."""
    return GridFunction.from_function(lambda z: 0.5 * np.log(metric.density(z)), center, half_width, n)


def singular_mask(u: GridFunction, points: Sequence[complex] = (), seams: Sequence[float] = (), width: float = 1.5) -> np.ndarray:
    """Nodes within ``width`` grid steps of a singular point or seam circle."""
    Z = u.z()
    mask = np.zeros(Z.shape, dtype=bool)
    for p in points:
        mask |= np.abs(Z - p) < width * u.h
    for r in seams:
        mask |= np.abs(np.abs(Z) - r) < width * u.h
    return mask


def smooth_curvature_from_factor(
    u: GridFunction,
    K0=0.0,
    mask: np.ndarray | None = None,
    max_masked: float = 0.2,
) -> GridFunction:
    """Curvature of e^(2u) times a flat chart metric with curvature K0.

    K = e^(-2u) (K0 + Lap u), where Lap = -(d_xx + d_yy) is the positive
    Laplacian, discretised by the 5-point stencil. Boundary nodes, masked
    nodes and nodes whose stencil touches a masked or non-finite value are
    returned as NaN.
    """
    v = np.asarray(u.values, dtype=float)
    nx, ny = v.shape
    bad = ~np.isfinite(v)
    user = np.zeros_like(bad) if mask is None else np.asarray(mask, dtype=bool)
    interior = np.zeros_like(bad)
    interior[1:-1, 1:-1] = True
    n_interior = int(interior.sum())
    masked = (user | bad) & interior
    if n_interior and masked.sum() / n_interior > max_masked:
        raise MaskTooLarge(f"{masked.sum()} of {n_interior} interior nodes are masked")
    vv = np.where(bad, 0.0, v)
    lap = np.full_like(v, np.nan)
    lap[1:-1, 1:-1] = -(vv[2:, 1:-1] + vv[:-2, 1:-1] + vv[1:-1, 2:] + vv[1:-1, :-2] - 4 * vv[1:-1, 1:-1]) / u.h ** 2
    blocked = user | bad
    near = blocked.copy()
    near[1:, :] |= blocked[:-1, :]
    near[:-1, :] |= blocked[1:, :]
    near[:, 1:] |= blocked[:, :-1]
    near[:, :-1] |= blocked[:, 1:]
    k0 = K0.values if isinstance(K0, GridFunction) else K0
    with np.errstate(all="ignore"):
        K = np.exp(-2 * vv) * (k0 + lap)
    K[near | ~interior] = np.nan
    return GridFunction(u.x0, u.y0, u.h, K)


def density_csv(metric: ConformalChartMetric, half_width: float = 2.0, n: int = 64) -> str:
    """The density rho on a square grid as CSV (x, y, rho)."""
    g = GridFunction.from_function(metric.density, 0j, half_width, n)
    return g.to_csv("rho")

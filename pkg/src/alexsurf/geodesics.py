"""Intrinsic distances on cone surfaces.

Distances are upper bounds from a Steiner-point graph (``2**level`` points
per edge, all pairs inside a face joined by straight segments), tightened
by unfolding the strip of faces the graph path crosses and pulling the
path taut with a funnel pass. Values are reported as the running minimum
over levels ``0..level`` so refinement never increases them.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .curvature import ATOM_THRESHOLD, vertex_curvature_atoms
from .errors import BadParameter, DisconnectedPoint, EmptySample, RadiusTooLarge
from .mesh_core import ConeSurface

_SNAP = 1e-12


@dataclass(frozen=True)
class SurfacePoint:
    """A point of a face in barycentric coordinates (one per corner)."""

    face: int
    bary: tuple[float, float, float]

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=float)
        if b.shape != (3,) or np.any(b < -1e-12):
            raise ValueError(f"invalid barycentric coordinates {self.bary}")
        b = np.maximum(b, 0.0)
        b = b / b.sum()
        b[np.abs(b) < _SNAP] = 0.0
        b = b / b.sum()
        object.__setattr__(self, "bary", tuple(float(x) for x in b))

    @classmethod
    def at_corner(cls, face: int, corner: int) -> "SurfacePoint":
        b = [0.0, 0.0, 0.0]
        b[corner] = 1.0
        return cls(face, tuple(b))


def vertex_point(surface: ConeSurface, v: int) -> SurfacePoint:
    c = int(np.flatnonzero(surface.combinatorics.corner_vertex == v)[0])
    return SurfacePoint.at_corner(c // 3, c % 3)


# ---------------------------------------------------------------- locating points

@dataclass(frozen=True)
class _Located:
    kind: str  # "vertex", "edge", "face"
    key: tuple  # canonical identity
    faces: tuple[int, ...]
    positions: tuple[tuple[float, float], ...]  # layout position in each face


def _locate(surface: ConeSurface, p: SurfacePoint) -> _Located:
    tri = surface.combinatorics
    b = np.asarray(p.bary)
    lay = surface.layouts[p.face]
    nz = np.flatnonzero(b > 0)
    if nz.size == 1:
        v = int(tri.corner_vertex[3 * p.face + nz[0]])
        corners = np.flatnonzero(tri.corner_vertex == v)
        faces = tuple(int(c // 3) for c in corners)
        pos = tuple(tuple(surface.layouts[c // 3, c % 3]) for c in corners)
        return _Located("vertex", ("v", v), faces, pos)
    xy = b @ lay
    if nz.size == 2:
        i = int(np.flatnonzero(b == 0)[0])  # on the side opposite corner i
        h = 3 * p.face + i
        t = int(tri.twin[h])
        s = b[(i + 2) % 3]  # fraction from start corner i+1 towards i+2
        if t < 0 or h < t:
            key = ("e", int(tri.edge_of_halfedge[h]), round(float(s), 13))
        else:
            key = ("e", int(tri.edge_of_halfedge[h]), round(1.0 - float(s), 13))
        if t < 0:
            return _Located("edge", key, (p.face,), (tuple(xy),))
        g, j = divmod(t, 3)
        # twin runs from corner j+1 (= our end) to corner j+2 (= our start)
        lg = surface.layouts[g]
        xy2 = lg[(j + 2) % 3] + s * (lg[(j + 1) % 3] - lg[(j + 2) % 3])
        return _Located("edge", key, (p.face, g), (tuple(xy), tuple(xy2)))
    return _Located("face", ("f", p.face, tuple(np.round(b, 13))), (p.face,), (tuple(xy),))


# ---------------------------------------------------------------- Steiner graph

class _SteinerGraph:
    def __init__(self, surface: ConeSurface, level: int):
        tri = surface.combinatorics
        self.surface = surface
        self.level = level
        k = 2 ** level
        self.k = k
        F = tri.n_faces
        V = tri.vertex_count
        self.n_vertices = V
        frac = np.arange(1, k + 1) / (k + 1)
        lay = surface.layouts  # (F, 3, 2)
        M = 3 + 3 * k
        nodes = np.empty((F, M), dtype=np.int64)
        pos = np.empty((F, M, 2))
        nodes[:, :3] = tri.corner_vertex.reshape(F, 3)
        pos[:, :3] = lay
        h = np.arange(3 * F).reshape(F, 3)
        edge = tri.edge_of_halfedge.reshape(F, 3)
        forward = (tri.twin.reshape(F, 3) < 0) | (h < tri.twin.reshape(F, 3))
        for i in range(3):
            a = lay[:, (i + 1) % 3]
            b = lay[:, (i + 2) % 3]
            cols = slice(3 + i * k, 3 + (i + 1) * k)
            pos[:, cols] = a[:, None, :] + frac[None, :, None] * (b - a)[:, None, :]
            # reversed half-edges see the canonical parameters backwards
            idx = np.where(forward[:, i, None], np.arange(k)[None, :], k - 1 - np.arange(k)[None, :])
            nodes[:, cols] = V + edge[:, i, None] * k + idx
        self.face_nodes = nodes
        self.face_pos = pos
        self.n_nodes = V + tri.edge_count * k
        iu, ju = np.triu_indices(M, 1)
        rows, cols, wts = [], [], []
        chunk = max(1, 4_000_000 // max(1, iu.size))
        for s0 in range(0, F, chunk):
            P = pos[s0:s0 + chunk]
            N = nodes[s0:s0 + chunk]
            d = np.linalg.norm(P[:, iu] - P[:, ju], axis=2)
            rows.append(N[:, iu].ravel())
            cols.append(N[:, ju].ravel())
            wts.append(d.ravel())
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        w = np.concatenate(wts)
        lo, hi = np.minimum(r, c), np.maximum(r, c)
        keep = lo != hi
        lo, hi, w = lo[keep], hi[keep], w[keep]
        key = lo * self.n_nodes + hi
        order = np.lexsort((w, key))
        key, lo, hi, w = key[order], lo[order], hi[order], w[order]
        first = np.ones(key.size, dtype=bool)
        first[1:] = key[1:] != key[:-1]
        self.lo, self.hi, self.w = lo[first], hi[first], np.maximum(w[first], 1e-300)
        # node -> faces (for picking the face of a path segment)
        self.node_edge = np.full(self.n_nodes, -1, dtype=np.int64)
        self.node_edge[V:] = np.repeat(np.arange(tri.edge_count), k)
        node_faces: dict[int, set] = {}
        for f in range(F):
            for n in nodes[f]:
                node_faces.setdefault(int(n), set()).add(f)
        self.node_faces = node_faces
        # (node, face) -> list of (layout position, local corner or -1)
        slots: dict[tuple[int, int], list] = {}
        for f in range(F):
            for m, (n, p) in enumerate(zip(nodes[f], pos[f])):
                slots.setdefault((int(n), f), []).append((p, m if m < 3 else -1))
        self.slots = slots

    def attach(self, loc: _Located, node_id: int):
        """Edges from an off-graph point to every node of its face(s)."""
        if loc.kind == "vertex":
            return None
        rows, wts = [], []
        for f, xy in zip(loc.faces, loc.positions):
            d = np.linalg.norm(self.face_pos[f] - np.asarray(xy), axis=1)
            rows.append(self.face_nodes[f])
            wts.append(d)
        return np.concatenate(rows), np.maximum(np.concatenate(wts), 1e-300)

    def solve(self, sources: Sequence[_Located], rows: int = 1):
        """Dijkstra from the first ``rows`` sources over the graph augmented by all sources.

        Returns (dist, pred, ids, csr) with dist/pred of shape (rows, n).
        """
        extra_r, extra_c, extra_w = [], [], []
        ids = []
        n = self.n_nodes
        for loc in sources:
            if loc.kind == "vertex":
                ids.append(loc.key[1])
                continue
            nid = n
            n += 1
            ids.append(nid)
            nbr, w = self.attach(loc, nid)
            extra_r.append(np.full(nbr.size, nid))
            extra_c.append(nbr)
            extra_w.append(w)
        r = np.concatenate([self.lo] + extra_r)
        c = np.concatenate([self.hi] + extra_c)
        w = np.concatenate([self.w] + extra_w)
        g = coo_matrix((w, (r, c)), shape=(n, n)).tocsr()
        dist, pred = dijkstra(g, directed=False, indices=ids[:rows], return_predecessors=True)
        return dist, pred, ids, g


_GRAPHS: "weakref.WeakKeyDictionary[ConeSurface, dict]" = weakref.WeakKeyDictionary()


def _graph(surface: ConeSurface, level: int) -> _SteinerGraph:
    per = _GRAPHS.setdefault(surface, {})
    if level not in per:
        per[level] = _SteinerGraph(surface, level)
    return per[level]


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Graph distances from ``source`` to every Steiner-graph node at ``level``."""

    source: SurfacePoint
    level: int
    distances: np.ndarray
    surface: ConeSurface

    def __call__(self, p: SurfacePoint) -> float:
        """Graph-distance upper bound at an arbitrary surface point."""
        g = _graph(self.surface, self.level)
        loc = _locate(self.surface, p)
        if loc.kind == "vertex":
            return float(self.distances[loc.key[1]])
        nbr, w = g.attach(loc, -1)
        src = _locate(self.surface, self.source)
        best = float(np.min(self.distances[nbr] + w))
        shared = set(src.faces) & set(loc.faces)
        for f in shared:
            a = np.asarray(src.positions[src.faces.index(f)])
            b = np.asarray(loc.positions[loc.faces.index(f)])
            best = min(best, float(np.linalg.norm(a - b)))
        return best


def distance_field(surface: ConeSurface, source: SurfacePoint, level: int = 3) -> DistanceField:
    g = _graph(surface, level)
    dist, _, _, _ = g.solve([_locate(surface, source)])
    dist = dist[0, : g.n_nodes]
    if not np.all(np.isfinite(dist)):
        raise DisconnectedPoint("graph does not reach every node")
    return DistanceField(source, level, dist, surface)


# ---------------------------------------------------------------- straightening

def _cross(u, v) -> float:
    return u[0] * v[1] - u[1] * v[0]


def _polyline_length(pts) -> float:
    return math.fsum(float(np.linalg.norm(b - a)) for a, b in zip(pts[:-1], pts[1:]))


def _rigid(src_a, src_b, dst_a, dst_b):
    """Orientation-preserving map sending src_a->dst_a, src_b->dst_b."""
    u = src_b - src_a
    v = dst_b - dst_a
    ang = math.atan2(v[1], v[0]) - math.atan2(u[1], u[0])
    c, s = math.cos(ang), math.sin(ang)
    R = np.array([[c, -s], [s, c]])
    return lambda p: (np.asarray(p) - src_a) @ R.T + dst_a


@dataclass
class _Strip:
    """A sequence of adjacent faces with the half-edges crossed between them."""

    faces: list
    halfedges: list
    start: np.ndarray  # layout coordinates in faces[0]
    end: np.ndarray  # layout coordinates in faces[-1]

    def unfold(self, surface: ConeSurface):
        tri = surface.combinatorics
        lay = surface.layouts
        maps = [lambda p: np.asarray(p, dtype=float)]
        portals = []
        for cur, h in zip(self.faces[:-1], self.halfedges):
            i = h % 3
            g, j = divmod(int(tri.twin[h]), 3)
            m = maps[-1]
            a = m(lay[cur, (i + 1) % 3])
            b = m(lay[cur, (i + 2) % 3])
            # the twin runs from its corner j+1 (= b) to j+2 (= a)
            maps.append(_rigid(lay[g, (j + 1) % 3], lay[g, (j + 2) % 3], b, a))
            portals.append((b, a))
        self.maps = maps
        self.portals = portals
        return maps, portals


def _step(surface, face: int, corner: int, ccw: bool):
    """Rotate around the vertex at (face, corner) into the next face of its fan."""
    tri = surface.combinatorics
    h = 3 * face + ((corner + 1) % 3 if ccw else (corner + 2) % 3)
    t = int(tri.twin[h])
    if t < 0:
        return None
    g, j = divmod(t, 3)
    return h, g, ((j + 1) % 3 if ccw else (j + 2) % 3)


def _fan_route(surface, face, corner, target, ccw: bool):
    """Half-edges and faces crossed rotating from (face, corner) to ``target``."""
    hs, fs = [], []
    limit = 3 * surface.n_faces
    cur = (face, corner)
    while cur != target:
        st = _step(surface, cur[0], cur[1], ccw)
        if st is None or len(hs) > limit:
            return None
        hs.append(st[0])
        fs.append(st[1])
        cur = (st[1], st[2])
    return hs, fs


def _side_through(lay_f, q) -> int:
    """Local side index of a face whose segment contains layout point q."""
    best, arg = math.inf, -1
    for i in range(3):
        a, b = lay_f[(i + 1) % 3], lay_f[(i + 2) % 3]
        e = b - a
        d = abs(_cross(e, q - a)) / np.linalg.norm(e)
        if d < best:
            best, arg = d, i
    return arg


def _strip_from_path(surface, segs, nodes, is_vertex) -> _Strip:
    faces = [segs[0][0]]
    hs = []
    for j in range(1, len(segs)):
        fa, _, (pa, ca) = segs[j - 1]
        fb, (pb, cb), _ = segs[j]
        if not is_vertex(nodes[j]):
            if fa == fb and np.allclose(pa, pb, atol=1e-12):
                continue
            h = 3 * fa + _side_through(surface.layouts[fa], pa)
            if surface.combinatorics.twin[h] < 0 or surface.combinatorics.twin[h] // 3 != fb:
                raise DisconnectedPoint("graph path crosses an unknown edge")
            hs.append(h)
            faces.append(fb)
            continue
        if fa == fb and ca == cb:
            continue
        routes = [r for r in (_fan_route(surface, fa, ca, (fb, cb), True),
                              _fan_route(surface, fa, ca, (fb, cb), False)) if r is not None]
        if not routes:
            raise DisconnectedPoint("cannot pass around a vertex")
        rh, rf = min(routes, key=lambda r: len(r[0]))
        hs.extend(rh)
        faces.extend(rf)
    return _Strip(faces, hs, np.asarray(segs[0][1][0], float), np.asarray(segs[-1][2][0], float))


def _funnel_indexed(start, portals, end):
    """Funnel pass that also reports, per corner, (portal index, side)."""
    ports = [(start, start)] + list(portals) + [(end, end)]
    out = [(start, -1, "")]
    apex, left, right = start, start, start
    apex_i = left_i = right_i = 0
    i = 1
    eps = 1e-15
    while i < len(ports):
        pl, pr = ports[i]
        if _cross(right - apex, pr - apex) >= -eps:
            if np.array_equal(apex, right) or _cross(left - apex, pr - apex) <= eps:
                right, right_i = pr, i
            else:
                out.append((left, left_i - 1, "l"))
                apex, apex_i = left, left_i
                left = right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        if _cross(left - apex, pl - apex) <= eps:
            if np.array_equal(apex, left) or _cross(right - apex, pl - apex) >= -eps:
                left, left_i = pl, i
            else:
                out.append((right, right_i - 1, "r"))
                apex, apex_i = right, right_i
                left = right = apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        i += 1
    if not np.array_equal(out[-1][0], end):
        out.append((end, len(portals), ""))
    return out


def funnel(start, portals: Sequence[tuple], end) -> list[np.ndarray]:
    """Shortest polyline from ``start`` to ``end`` through ordered portals.

    Each portal is ``(left, right)`` as seen when walking from start to end.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    ports = [(np.asarray(l, float), np.asarray(r, float)) for l, r in portals]
    return [p for p, _, _ in _funnel_indexed(start, ports, end)]


def _vec_angle(u, w) -> float:
    return math.atan2(abs(_cross(u, w)), float(u @ w))


def _reroute(surface, strip: _Strip, prev, p, nxt, idx: int, side: str):
    """Strip going around the other side of the vertex at a funnel corner, or None."""
    tri = surface.combinatorics
    portals = strip.portals
    k = 0 if side == "l" else 1
    tol = 1e-9 * (1.0 + float(np.abs(p).max()))
    i0 = idx
    while i0 > 0 and np.allclose(portals[i0 - 1][k], p, atol=tol):
        i0 -= 1
    j0 = idx
    while j0 + 1 < len(portals) and np.allclose(portals[j0 + 1][k], p, atol=tol):
        j0 += 1

    def corner_at(m):
        h = strip.halfedges[m]
        return (h % 3 + 2) % 3 if side == "l" else (h % 3 + 1) % 3

    v = int(tri.corner_vertex[3 * strip.faces[i0] + corner_at(i0)])
    if not tri.interior_mask[v]:
        return None
    inside = _vec_angle(prev - p, portals[i0][1 - k] - p)
    inside += sum(surface.angles[strip.faces[m], corner_at(m)] for m in range(i0 + 1, j0 + 1))
    inside += _vec_angle(portals[j0][1 - k] - p, nxt - p)
    theta = float(np.sum(surface.angles.ravel()[tri.corner_vertex == v]))
    if theta - inside >= np.pi - 1e-10:
        return None
    hj = strip.halfedges[j0]
    g, jj = divmod(int(tri.twin[hj]), 3)
    target = (g, (jj + 1) % 3 if side == "l" else (jj + 2) % 3)
    route = _fan_route(surface, strip.faces[i0], corner_at(i0), target, ccw=(side != "l"))
    if route is None:
        return None
    rh, rf = route
    faces = strip.faces[: i0 + 1] + rf + strip.faces[j0 + 2:]
    hs = strip.halfedges[:i0] + rh + strip.halfedges[j0 + 1:]
    return _Strip(faces, hs, strip.start, strip.end)


def _tighten(surface, strip: _Strip, max_iter: int = 500):
    """Funnel, then reroute around vertices with an angle below pi until none remain."""
    for _ in range(max_iter):
        maps, portals = strip.unfold(surface)
        end = maps[-1](strip.end)
        pts = _funnel_indexed(strip.start, portals, end)
        for q in range(1, len(pts) - 1):
            p, idx, side = pts[q]
            new = _reroute(surface, strip, pts[q - 1][0], p, pts[q + 1][0], idx, side)
            if new is not None:
                strip = new
                break
        else:
            return strip, [p for p, _, _ in pts]
    return strip, [p for p, _, _ in pts]


def _path_nodes(pred, src, dst):
    path = [dst]
    while path[-1] != src:
        p = pred[path[-1]]
        if p < 0:
            raise DisconnectedPoint("no path between the points")
        path.append(int(p))
    return path[::-1]


_CANDIDATES = 12


def _straightened(surface: ConeSurface, x: SurfacePoint, y: SurfacePoint, level: int, want_path: bool = False):
    """Shortest straightened length over several near-optimal graph paths.

    Candidates are the graph paths from ``x`` to each graph neighbour of
    ``y`` (and vice versa), closed by one straight segment. Each is unfolded
    into a face strip, pulled taut, and rerouted around any vertex it wraps
    by less than a straight angle. Every result is a genuine surface path,
    so the minimum stays an upper bound.
    """
    g = _graph(surface, level)
    lx, ly = _locate(surface, x), _locate(surface, y)
    if lx.key == ly.key:
        return 0.0, []
    dist, pred, ids, csr = g.solve([lx, ly], rows=2)
    sid, tid = ids
    if not np.isfinite(dist[0, tid]):
        raise DisconnectedPoint("points are not connected")
    graph_len = float(dist[0, tid])
    csc = csr.tocsc()

    candidates = []
    for row, (a, b) in enumerate([(sid, tid), (tid, sid)]):
        # undirected edges are stored once, so look at both the row and the column
        nbr = np.concatenate([csr.indices[csr.indptr[b]:csr.indptr[b + 1]], csc.indices[csc.indptr[b]:csc.indptr[b + 1]]])
        wts = np.concatenate([csr.data[csr.indptr[b]:csr.indptr[b + 1]], csc.data[csc.indptr[b]:csc.indptr[b + 1]]])
        score = dist[row, nbr] + wts
        seen = set()
        for k in np.argsort(score, kind="stable"):
            n = int(nbr[k])
            if n in seen or not np.isfinite(score[k]):
                continue
            seen.add(n)
            path = (_path_nodes(pred[row], a, n) + [b]) if n != a else [a, b]
            candidates.append(path if row == 0 else path[::-1])
            if len(seen) >= _CANDIDATES:
                break

    best_len, best_out = graph_len, []
    for nodes in candidates:
        length, out = _straighten_path(surface, g, lx, ly, ids, nodes)
        if length < best_len or not best_out:
            best_len = min(best_len, length)
            best_out = out
    return best_len, (best_out if want_path else [])


def _straighten_path(surface, g, lx, ly, ids, nodes):
    extra = {}
    for loc, nid in zip([lx, ly], ids):
        if loc.kind != "vertex":
            sl: dict[int, list] = {}
            for f, xy in zip(loc.faces, loc.positions):
                sl.setdefault(f, []).append((np.asarray(xy), -1))
            extra[nid] = sl

    def faces_of(n):
        return set(extra[n]) if n in extra else g.node_faces[n]

    def slots(n, f):
        return extra[n][f] if n in extra else g.slots[(n, f)]

    segs = []
    prev = None
    for a, b in zip(nodes[:-1], nodes[1:]):
        common = faces_of(a) & faces_of(b)
        if not common:
            raise DisconnectedPoint("inconsistent graph path")
        f = prev if prev in common else min(common)
        best = None
        for sa in slots(a, f):
            for sb in slots(b, f):
                d = float(np.linalg.norm(sa[0] - sb[0]))
                if best is None or d < best[0]:
                    best = (d, sa, sb)
        segs.append((f, best[1], best[2]))
        prev = f
    strip = _strip_from_path(surface, segs, nodes, lambda n: n < g.n_vertices and n not in extra)
    strip, pts = _tighten(surface, strip)
    return _polyline_length(pts), [(strip, pts)]


def _canonical_order(surface, x, y):
    kx = _locate(surface, x).key
    ky = _locate(surface, y).key
    return (y, x) if repr(ky) < repr(kx) else (x, y)


def intrinsic_distance(surface: ConeSurface, x: SurfacePoint, y: SurfacePoint, level: int = 3) -> float:
    """Upper bound on the intrinsic distance, nonincreasing in ``level``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    x, y = _canonical_order(surface, x, y)
    best = math.inf
    for lv in range(level + 1):
        d, _ = _straightened(surface, x, y, lv)
        best = min(best, d)
    return best


def shortest_path_polyline(surface: ConeSurface, x: SurfacePoint, y: SurfacePoint, level: int = 3) -> tuple[float, np.ndarray]:
    """Length and 3D (or flat-layout) polyline of the straightened path at ``level``."""
    d, pieces = _straightened(surface, x, y, level, want_path=True)
    pts3 = []
    tri = surface.combinatorics
    for strip, pts in pieces:
        for k, p in enumerate(pts):
            if k == 0 and pts3:
                continue
            pts3.append(_strip_point_to_space(surface, strip, p))
            if k + 1 < len(pts):
                q = pts[k + 1]
                for pi, (l, r) in enumerate(strip.portals):
                    hit = _segment_hit(p, q, l, r)
                    if hit is not None and 0 < hit[0] < 1:
                        pts3.append(_strip_point_to_space(surface, strip, p + hit[0] * (q - p), pi + 1))
    return d, np.array(pts3)


def _segment_hit(p, q, a, b):
    d1, d2 = q - p, b - a
    den = _cross(d1, d2)
    if abs(den) < 1e-15:
        return None
    t = _cross(a - p, d2) / den
    s = _cross(a - p, d1) / den
    if -1e-12 <= s <= 1 + 1e-12:
        return t, s
    return None


def _strip_point_to_space(surface, strip, p, index=None):
    """Map a strip-plane point to 3D (if embedded) via barycentrics of a strip face."""
    cands = range(len(strip.faces)) if index is None else [index]
    best = None
    for k in cands:
        f = strip.faces[k]
        corners = np.array([strip.maps[k](c) for c in surface.layouts[f]])
        T = np.column_stack([corners[1] - corners[0], corners[2] - corners[0]])
        try:
            uv = np.linalg.solve(T, p - corners[0])
        except np.linalg.LinAlgError:
            continue
        bary = np.array([1 - uv.sum(), uv[0], uv[1]])
        err = -min(bary.min(), 0.0)
        if best is None or err < best[0]:
            best = (err, f, bary)
    _, f, bary = best
    if surface.positions is not None:
        verts = surface.positions[surface.combinatorics.faces[f]]
        return bary @ verts
    return np.append(bary @ surface.layouts[f], 0.0)


# ---------------------------------------------------------------- uniform distance

def uniform_distance(d1: Callable, d2: Callable, sample_pairs: Iterable[tuple]) -> float:
    """max |d1(x,y) - d2(x,y)| over the sample: a lower bound of the true sup."""
    pairs = list(sample_pairs)
    if not pairs:
        raise EmptySample("uniform_distance needs at least one pair")
    return max(abs(float(d1(x, y)) - float(d2(x, y))) for x, y in pairs)


def sample_surface_points(surface: ConeSurface, n: int, seed: int = 0) -> list[SurfacePoint]:
    """Seeded quasi-random points (area-weighted face choice, Halton barycentrics)."""
    from scipy.stats import qmc

    s = surface.lengths
    p = s.sum(axis=1) / 2
    area = np.sqrt(np.maximum(p * (p - s[:, 0]) * (p - s[:, 1]) * (p - s[:, 2]), 0))
    cdf = np.cumsum(area) / area.sum()
    u = qmc.Halton(d=3, seed=seed).random(n)
    faces = np.minimum(np.searchsorted(cdf, u[:, 0]), len(cdf) - 1)
    r1, r2 = np.sqrt(u[:, 1]), u[:, 2]
    bary = np.stack([1 - r1, r1 * (1 - r2), r1 * r2], axis=1)
    return [SurfacePoint(int(f), tuple(b)) for f, b in zip(faces, bary)]


def sample_pairs(points: Sequence, n_pairs: int, seed: int = 0) -> list[tuple]:
    """``n_pairs`` seeded pairs of distinct entries of ``points``."""
    if len(points) < 2:
        raise BadParameter("sampling pairs needs at least two points")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), size=n_pairs)
    # shift j by a nonzero offset so that it never equals i
    j = (i + rng.integers(1, len(points), size=n_pairs)) % len(points)
    return [(points[a], points[b]) for a, b in zip(i, j)]


# ---------------------------------------------------------------- circle probes

class MetricProbe(Protocol):
    """What :func:`geodesic_circle_length` needs from a metric space."""

    def distance_from(self, center) -> Callable: ...

    def ray(self, center, angle: float, t: float): ...

    def ray_reach(self, center) -> float: ...

    def chord(self, p, q) -> float: ...

    def other_singular_points(self, center) -> list: ...


def geodesic_circle_length(space, center, radius: float, n_rays: int = 64, **kw) -> float:
    """Length of the metric circle of ``radius`` around ``center``.

    ``n_rays`` rays leave the center at evenly spaced angles; on each, the
    point at distance ``radius`` is found by root finding on the distance
    field, and consecutive probe points are joined by short chords.
    Radius/length approximate the cone angle at ``center`` as radius -> 0.
    """
    if isinstance(space, ConeSurface):
        space = ConeSurfaceProbe(space, **kw)
    if radius <= 0:
        raise ValueError("radius must be positive")
    others = space.other_singular_points(center)
    if others:
        dfield = space.distance_from(center)
        nearest = min(dfield(p) for p in others)
        if radius > 0.25 * nearest:
            raise RadiusTooLarge(f"radius {radius} exceeds a quarter of the distance {nearest:.6g} to the nearest singular point")
    else:
        dfield = space.distance_from(center)
    reach = space.ray_reach(center)
    probes = []
    for k in range(n_rays):
        ang = 2.0 * np.pi * k / n_rays
        fn = lambda t: dfield(space.ray(center, ang, t)) - radius
        hi = min(reach, 2.0 * radius)
        while fn(hi) < 0:
            if hi >= reach:
                raise RadiusTooLarge("metric circle leaves the available domain")
            hi = min(reach, 2.0 * hi)
        t = brentq(fn, 0.0, hi, xtol=1e-12 * max(1.0, hi), rtol=1e-12)
        probes.append(space.ray(center, ang, t))
    return math.fsum(space.chord(probes[k], probes[(k + 1) % n_rays]) for k in range(n_rays))


class ConeSurfaceProbe:
    """Circle probes on a cone surface: straight rays traced across faces."""

    def __init__(self, surface: ConeSurface, level: int = 3, threshold: float = ATOM_THRESHOLD):
        self.surface = surface
        self.level = level
        self.threshold = threshold

    def distance_from(self, center):
        return distance_field(self.surface, center, self.level)

    def chord(self, p, q):
        return intrinsic_distance(self.surface, p, q, self.level)

    def other_singular_points(self, center):
        atoms = vertex_curvature_atoms(self.surface, self.threshold)
        loc = _locate(self.surface, center)
        out = []
        verts = list(atoms.atom_sites) + self.surface.combinatorics.boundary_vertices.tolist()
        for v in verts:
            if loc.kind == "vertex" and loc.key[1] == v:
                continue
            out.append(vertex_point(self.surface, v))
        return out

    def ray_reach(self, center):
        return float(self.surface.lengths.max()) * 3.0

    def _fan(self, center):
        loc = _locate(self.surface, center)
        if loc.kind != "vertex":
            return None
        corners = self.surface.combinatorics.vertex_corners(loc.key[1])
        angles = np.array([self.surface.angles[c.face, c.index] for c in corners])
        return corners, angles

    def ray(self, center, angle, t):
        surf = self.surface
        fan = self._fan(center)
        if fan is None:
            if _locate(surf, center).kind == "edge":
                raise ValueError("circle probes need a vertex or face-interior center")
            f = center.face
            p = np.asarray(center.bary) @ surf.layouts[f]
            d = np.array([math.cos(angle), math.sin(angle)])
        else:
            corners, angles = fan
            total = angles.sum()
            a = angle / (2 * np.pi) * total
            cum = np.concatenate([[0.0], np.cumsum(angles)])
            k = min(int(np.searchsorted(cum, a, side="right") - 1), len(corners) - 1)
            c = corners[k]
            lay = surf.layouts[c.face]
            e = lay[(c.index + 1) % 3] - lay[c.index]
            base = math.atan2(e[1], e[0]) + (a - cum[k])
            f = c.face
            p = lay[c.index].copy()
            d = np.array([math.cos(base), math.sin(base)])
        return _trace(surf, f, p, d, t)


def _trace(surface: ConeSurface, f: int, p: np.ndarray, d: np.ndarray, t: float) -> SurfacePoint:
    tri = surface.combinatorics
    remaining = t
    for _ in range(10_000):
        lay = surface.layouts[f]
        best = None
        for i in range(3):
            a, b = lay[(i + 1) % 3], lay[(i + 2) % 3]
            hit = _segment_hit(p, p + d, a, b)
            if hit is None:
                continue
            s, u = hit
            if s > 1e-13 and (best is None or s < best[0]):
                best = (s, i, u)
        if best is None or best[0] >= remaining:
            q = p + remaining * d
            return _to_bary(surface, f, q)
        s, i, u = best
        h = 3 * f + i
        tw = int(tri.twin[h])
        if tw < 0:
            raise RadiusTooLarge("ray left the surface through its boundary")
        g, j = divmod(tw, 3)
        lg = surface.layouts[g]
        m = _rigid(lay[(i + 2) % 3], lay[(i + 1) % 3], lg[(j + 1) % 3], lg[(j + 2) % 3])
        q = p + s * d
        p2 = m(q)
        d2 = m(q + d) - p2
        f, p, d = g, p2, d2 / np.linalg.norm(d2)
        remaining -= s
    raise RuntimeError("ray tracing did not terminate")


def _to_bary(surface, f, q) -> SurfacePoint:
    c = surface.layouts[f]
    T = np.column_stack([c[1] - c[0], c[2] - c[0]])
    uv = np.linalg.solve(T, q - c[0])
    b = np.array([1 - uv.sum(), uv[0], uv[1]])
    b = np.maximum(b, 0.0)
    return SurfacePoint(f, tuple(b / b.sum()))

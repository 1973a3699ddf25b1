"""Combinatorial triangulations and Euclidean cone surfaces.

A triangulation is a set of ``F`` oriented triangles together with an
involution on their ``3F`` half-edges. Half-edge ``3*f + i`` is the edge of
face ``f`` opposite its local corner ``i``; it runs from corner ``i+1`` to
corner ``i+2`` (indices mod 3), so each face is traversed counterclockwise.
Unpaired half-edges form the boundary.

Vertices are never given explicitly. They are the orbits of corners under
the gluing, which keeps vertex labels consistent by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    Disconnected,
    LengthMismatch,
    NonManifold,
    OrientationClash,
    TriangleInequalityViolated,
)

#: relative margin for the strict triangle inequality
TRIANGLE_MARGIN = 1e-12
#: relative tolerance when comparing lengths of glued half-edges
LENGTH_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Corner:
    face: int
    index: int

    def __post_init__(self):
        if self.index not in (0, 1, 2) or self.face < 0:
            raise IndexError(f"invalid corner {self.face}/{self.index}")


def _he_start(h):
    """Corner id (3*f + c) at which half-edge ``h`` starts."""
    f, i = np.divmod(h, 3)
    return 3 * f + (i + 1) % 3


def _he_end(h):
    f, i = np.divmod(h, 3)
    return 3 * f + (i + 2) % 3


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Validated combinatorial surface. Build with :func:`build_triangulation`."""

    n_faces: int
    twin: np.ndarray  # (3F,) partner half-edge or -1
    corner_vertex: np.ndarray  # (3F,) vertex id of each corner
    vertex_count: int
    boundary_loops: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def faces(self) -> np.ndarray:
        """Vertex ids of each face, shape (F, 3)."""
        return self.corner_vertex.reshape(-1, 3)

    @cached_property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.twin >= 0) // 2 + np.count_nonzero(self.twin < 0))

    @cached_property
    def edge_of_halfedge(self) -> np.ndarray:
        """Undirected edge id of every half-edge (twins share an id)."""
        h = np.arange(3 * self.n_faces)
        rep = np.where(self.twin >= 0, np.minimum(h, self.twin), h)
        _, ids = np.unique(rep, return_inverse=True)
        return ids

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        b = np.flatnonzero(self.twin < 0)
        return np.unique(self.corner_vertex[_he_start(b)])

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.vertex_count, dtype=bool)
        mask[self.boundary_vertices] = False
        return mask

    def is_closed(self) -> bool:
        return not np.any(self.twin < 0)

    def vertex_corners(self, v: int) -> list[Corner]:
        """Corners at vertex ``v`` in counterclockwise fan order.

        For boundary vertices the fan starts at the corner whose outgoing
        edge lies on the boundary.
        """
        ids = np.flatnonzero(self.corner_vertex == v)
        if ids.size == 0:
            raise IndexError(f"no vertex {v}")
        start = int(ids[0])
        if not self.interior_mask[v]:
            for c in ids:
                f, k = divmod(int(c), 3)
                # outgoing edge of corner k is the half-edge opposite k+2
                if self.twin[3 * f + (k + 2) % 3] < 0:
                    start = int(c)
                    break
        order = [start]
        c = start
        while True:
            f, k = divmod(c, 3)
            h_in = 3 * f + (k + 1) % 3
            t = int(self.twin[h_in])
            if t < 0:
                break
            g, j = divmod(t, 3)
            c = 3 * g + (j + 1) % 3
            if c == start:
                break
            order.append(c)
        return [Corner(*divmod(c, 3)) for c in order]


def _pairs_array(edge_gluing) -> tuple[np.ndarray, np.ndarray]:
    rows = [tuple(int(x) for x in p) for p in edge_gluing]
    if not rows:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=bool)
    widths = {len(r) for r in rows}
    if not widths <= {2, 3}:
        raise ValueError("gluing entries are [halfedge_a, halfedge_b] or [a, b, reversed]")
    pairs = np.array([r[:2] for r in rows], dtype=np.int64)
    flipped = np.array([bool(r[2]) if len(r) == 3 else False for r in rows])
    return pairs, flipped


def _gluing_from_labels(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    _, starts, counts = np.unique(sorted_labels, return_index=True, return_counts=True)
    if np.any(counts > 2):
        bad = sorted_labels[starts[counts > 2][0]]
        raise NonManifold(f"edge label {bad} used by more than two face sides")
    two = starts[counts == 2]
    return np.stack([order[two], order[two + 1]], axis=1)


def build_triangulation(faces, edge_gluing=None) -> Triangulation:
    """Validate a gluing of oriented triangles.

    Parameters
    ----------
    faces : int or array_like of shape (F, 3)
        Either the number of faces, or per-face edge labels (label ``i`` of
        face ``f`` names the side opposite corner ``i``). When labels are
        given and ``edge_gluing`` is omitted, sides sharing a label are glued.
    edge_gluing : iterable of pairs, optional
        Half-edge pairs ``[3*f + i, 3*g + j]``. A third truthy entry asks for
        a direction-preserving gluing, which would reverse orientation.

    Raises
    ------
    NonManifold, OrientationClash, Disconnected
    """
    if np.ndim(faces) == 0:
        n_faces = int(faces)
        labels = None
    else:
        labels = np.asarray(faces, dtype=np.int64)
        if labels.ndim != 2 or labels.shape[1] != 3:
            raise ValueError("faces must have shape (F, 3)")
        n_faces = labels.shape[0]
    if n_faces < 1:
        raise ValueError("a triangulation needs at least one face")
    n_he = 3 * n_faces

    if edge_gluing is None:
        pairs = _gluing_from_labels(labels) if labels is not None else np.zeros((0, 2), np.int64)
        flipped = np.zeros(len(pairs), dtype=bool)
    else:
        pairs, flipped = _pairs_array(edge_gluing)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n_he):
        raise ValueError("half-edge index out of range")
    if np.any(flipped):
        raise OrientationClash(
            f"gluing {pairs[np.argmax(flipped)].tolist()} preserves direction; surface would be non-orientable"
        )
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise NonManifold("a half-edge cannot be glued to itself")
    used = np.bincount(pairs.ravel(), minlength=n_he)
    if np.any(used > 1):
        raise NonManifold(f"half-edge {int(np.argmax(used > 1))} glued to two partners")

    twin = np.full(n_he, -1, dtype=np.int64)
    twin[pairs[:, 0]] = pairs[:, 1]
    twin[pairs[:, 1]] = pairs[:, 0]

    # corners identified by the gluing: start(h) ~ end(twin), end(h) ~ start(twin)
    a, b = pairs[:, 0], pairs[:, 1]
    ci = np.concatenate([_he_start(a), _he_end(a)])
    cj = np.concatenate([_he_end(b), _he_start(b)])
    graph = coo_matrix((np.ones(ci.size), (ci, cj)), shape=(n_he, n_he))
    n_vertices, corner_vertex = connected_components(graph, directed=False)

    fa, fb = a // 3, b // 3
    fgraph = coo_matrix((np.ones(fa.size), (fa, fb)), shape=(n_faces, n_faces))
    n_comp, _ = connected_components(fgraph, directed=False)
    if n_comp != 1:
        raise Disconnected(f"gluing leaves {n_comp} connected components")

    # a face side whose two ends land on one vertex while being glued to
    # itself-adjacent sides would pinch; the fan check below catches the rest
    boundary = np.flatnonzero(twin < 0)
    loops = _trace_boundary(boundary, corner_vertex)
    tri = Triangulation(n_faces, twin, corner_vertex.astype(np.int64), int(n_vertices), loops)
    _check_fans(tri)
    return tri


def _trace_boundary(boundary, corner_vertex) -> tuple[tuple[int, ...], ...]:
    if boundary.size == 0:
        return ()
    starts = corner_vertex[_he_start(boundary)]
    ends = corner_vertex[_he_end(boundary)]
    if np.unique(starts).size != starts.size:
        raise NonManifold("a boundary vertex is pinched (two outgoing boundary edges)")
    nxt_of_vertex = dict(zip(starts.tolist(), boundary.tolist()))
    seen: set[int] = set()
    loops = []
    for h0 in boundary.tolist():
        if h0 in seen:
            continue
        loop = []
        h = h0
        while h not in seen:
            seen.add(h)
            loop.append(h)
            end = int(corner_vertex[_he_end(h)])
            if end not in nxt_of_vertex:
                raise NonManifold("open boundary chain")
            h = nxt_of_vertex[end]
        loops.append(tuple(loop))
    return tuple(loops)


def _check_fans(tri: Triangulation) -> None:
    # each vertex's corners must form a single fan; counting fans per vertex
    # via boundary-start corners catches pinched vertices
    twin = tri.twin
    n_corners = 3 * tri.n_faces
    c = np.arange(n_corners)
    f, k = np.divmod(c, 3)
    out_he = 3 * f + (k + 2) % 3
    fan_starts = np.bincount(tri.corner_vertex[twin[out_he] < 0], minlength=tri.vertex_count)
    if np.any(fan_starts > 1):
        raise NonManifold(f"vertex {int(np.argmax(fan_starts > 1))} has a disconnected link")


def triangulation_from_vertex_faces(faces) -> Triangulation:
    """Build a triangulation from vertex-labelled triangles (a plain mesh).

    Glued sides are found from shared vertex pairs; two faces running along
    the same directed edge raise :class:`OrientationClash`.
    """
    faces = np.asarray(faces, dtype=np.int64)
    n = faces.shape[0]
    i = np.arange(3)
    src = faces[:, (i + 1) % 3].ravel()
    dst = faces[:, (i + 2) % 3].ravel()
    he = np.arange(3 * n)
    nv = int(faces.max()) + 1
    key = src * nv + dst
    order = np.argsort(key, kind="stable")
    sk = key[order]
    dup = np.flatnonzero(sk[1:] == sk[:-1])
    if dup.size:
        h = order[dup[0]]
        raise OrientationClash(f"directed edge {int(src[h])}->{int(dst[h])} used twice")
    rkey = dst * nv + src
    pos = np.searchsorted(sk, rkey)
    pos = np.minimum(pos, sk.size - 1)
    found = sk[pos] == rkey
    partner = np.where(found, order[pos], -1)
    sel = (partner > he)
    pairs = np.stack([he[sel], partner[sel]], axis=1)
    und = np.minimum(src, dst) * nv + np.maximum(src, dst)
    _, cnt = np.unique(und, return_counts=True)
    if np.any(cnt > 2):
        raise NonManifold("an edge is shared by more than two faces")
    return build_triangulation(n, pairs)


def euler_characteristic(tri: Triangulation) -> int:
    """V - E + F counted after identifications."""
    return tri.vertex_count - tri.edge_count + tri.n_faces


def triangle_angles(lengths: np.ndarray) -> np.ndarray:
    """Interior angles opposite each side, shape (..., 3).

    Uses the half-angle form ``tan(A/2) = sqrt((s-b)(s-c) / (s(s-a)))``,
    which stays accurate for needle-like triangles where the law of cosines
    loses digits.
    """
    lengths = np.asarray(lengths, dtype=float)
    # Kahan's ordering: with p >= q >= r each factor -x + y + z is formed
    # from exact differences, so no digits are lost to cancellation
    order = np.argsort(-lengths, axis=-1, kind="stable")
    srt = np.take_along_axis(lengths, order, axis=-1)
    p, q, r = srt[..., 0], srt[..., 1], srt[..., 2]
    perim = p + (q + r)
    excess = np.stack([r - (p - q), r + (p - q), p + (q - r)], axis=-1)
    excess = np.maximum(excess, 0.0)
    fac = np.empty_like(excess)
    np.put_along_axis(fac, order, excess, axis=-1)
    out = np.empty_like(lengths)
    for i in range(3):
        num = fac[..., (i + 1) % 3] * fac[..., (i + 2) % 3]
        den = perim * fac[..., i]
        out[..., i] = 2.0 * np.arctan2(np.sqrt(num), np.sqrt(den))
    return out


def face_layout(lengths: np.ndarray) -> np.ndarray:
    """Planar corner positions (..., 3, 2): corner 0 at the origin, corner 1 on +x."""
    lengths = np.asarray(lengths, dtype=float)
    l0, l1, l2 = lengths[..., 0], lengths[..., 1], lengths[..., 2]
    out = np.zeros(lengths.shape[:-1] + (3, 2))
    out[..., 1, 0] = l2
    x = (l2 ** 2 + l1 ** 2 - l0 ** 2) / (2.0 * l2)
    out[..., 2, 0] = x
    out[..., 2, 1] = np.sqrt(np.maximum(l1 ** 2 - x ** 2, 0.0))
    return out


@dataclass(frozen=True, eq=False)
class ConeSurface:
    """A triangulation with Euclidean side lengths; the polyhedral metric space.

    ``lengths[f, i]`` is the length of the side of face ``f`` opposite its
    corner ``i``. ``positions`` optionally holds a known isometric embedding
    (one 3D point per vertex).
    """

    combinatorics: Triangulation
    lengths: np.ndarray
    positions: np.ndarray | None = None

    @property
    def n_faces(self) -> int:
        return self.combinatorics.n_faces

    @cached_property
    def angles(self) -> np.ndarray:
        return triangle_angles(self.lengths)

    @cached_property
    def layouts(self) -> np.ndarray:
        return face_layout(self.lengths)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Length per undirected edge id."""
        tri = self.combinatorics
        out = np.zeros(tri.edge_count)
        out[tri.edge_of_halfedge] = self.lengths.ravel()
        return out

    def scaled(self, factor: float) -> "ConeSurface":
        pos = None if self.positions is None else self.positions * factor
        return ConeSurface(self.combinatorics, self.lengths * factor, pos)


def glue_triangles(tri: Triangulation, edge_lengths, positions=None) -> ConeSurface:
    """Attach Euclidean lengths to a triangulation.

    ``edge_lengths`` is either per half-edge, shape (F, 3), or per undirected
    edge id (see :attr:`Triangulation.edge_of_halfedge`).

    Raises
    ------
    TriangleInequalityViolated, LengthMismatch
    """
    lengths = np.asarray(edge_lengths, dtype=float)
    if lengths.ndim == 1:
        if lengths.size != tri.edge_count:
            raise ValueError(f"expected {tri.edge_count} edge lengths, got {lengths.size}")
        lengths = lengths[tri.edge_of_halfedge].reshape(-1, 3)
    if lengths.shape != (tri.n_faces, 3):
        raise ValueError(f"lengths must have shape ({tri.n_faces}, 3)")
    if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
        f = int(np.argmax(~(lengths > 0).all(axis=1) | ~np.isfinite(lengths).all(axis=1)))
        raise TriangleInequalityViolated(f, lengths[f])
    flat = lengths.ravel()
    glued = np.flatnonzero(tri.twin >= 0)
    diff = np.abs(flat[glued] - flat[tri.twin[glued]])
    bad = diff > LENGTH_TOLERANCE * np.maximum(flat[glued], flat[tri.twin[glued]])
    if np.any(bad):
        h = int(glued[np.argmax(bad)])
        raise LengthMismatch((h, int(tri.twin[h])), flat[h], flat[tri.twin[h]])
    total = lengths.sum(axis=1)
    slack = total[:, None] - 2.0 * lengths  # b + c - a for each side a
    viol = (slack <= TRIANGLE_MARGIN * total[:, None]).any(axis=1)
    if np.any(viol):
        f = int(np.argmax(viol))
        raise TriangleInequalityViolated(f, lengths[f])
    pos = None if positions is None else np.asarray(positions, dtype=float)
    return ConeSurface(tri, lengths, pos)


def vertex_angle(surface: ConeSurface, corner: Corner) -> float:
    """Interior angle of ``corner``'s triangle at that corner, in (0, pi)."""
    if corner.face >= surface.n_faces:
        raise IndexError(f"face {corner.face} out of range")
    return float(surface.angles[corner.face, corner.index])


def surface_from_positions(points, faces) -> ConeSurface:
    """Cone surface induced on a triangulated polyhedron in R^3."""
    points = np.asarray(points, dtype=float)
    faces = np.asarray(faces, dtype=np.int64)
    tri = triangulation_from_vertex_faces(faces)
    p = points[faces]
    lengths = np.stack(
        [np.linalg.norm(p[:, (i + 2) % 3] - p[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1
    )
    # vertex ids from the triangulation may be renumbered relative to the input
    vpos = np.zeros((tri.vertex_count, 3))
    vpos[tri.corner_vertex] = p.reshape(-1, 3)
    return glue_triangles(tri, lengths, vpos)


# ---------------------------------------------------------------- presets

def cube_surface(side: float = 1.0) -> ConeSurface:
    """Surface of a cube, each square face split into two right triangles."""
    pts = np.array(
        [[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float
    ) * side
    quads = [
        (0, 2, 3, 1),  # z = 0, outward -z
        (4, 5, 7, 6),  # z = 1
        (0, 1, 5, 4),  # y = 0
        (2, 6, 7, 3),  # y = 1
        (0, 4, 6, 2),  # x = 0
        (1, 3, 7, 5),  # x = 1
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return surface_from_positions(pts, faces)


def square_torus(side: float = 1.0) -> ConeSurface:
    """Flat square torus from two right isosceles triangles.

    Face 0 has corners (0,0), (1,0), (1,1); face 1 has (0,0), (1,1), (0,1).
    Opposite sides of the square are identified.
    """
    d = math.sqrt(2.0) * side
    # face 0 sides: 0 opp (0,0): (1,0)->(1,1) right side; 1 opp (1,0): (1,1)->(0,0) diagonal;
    #               2 opp (1,1): (0,0)->(1,0) bottom
    # face 1 sides: 0 opp (0,0): (1,1)->(0,1) top; 1 opp (1,1): (0,1)->(0,0) left;
    #               2 opp (0,1): (0,0)->(1,1) diagonal
    gluing = [(1, 5), (0, 4), (2, 3)]
    tri = build_triangulation(2, gluing)
    lengths = np.array([[side, d, side], [side, side, d]])
    return glue_triangles(tri, lengths)


def double_triangle(a: float = 1.0, b: float = 1.0, c: float = 1.0) -> ConeSurface:
    """Two copies of a triangle glued along all three sides (a sphere)."""
    tri = build_triangulation(2, [(0, 3), (1, 5), (2, 4)])
    return glue_triangles(tri, np.array([[a, b, c], [a, c, b]]))


def single_triangle(a: float = 1.0, b: float = 1.0, c: float = 1.0) -> ConeSurface:
    return glue_triangles(build_triangulation(1, []), np.array([[a, b, c]]))


def regular_tetrahedron(side: float = 1.0) -> ConeSurface:
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    pts *= side / (2.0 * math.sqrt(2.0))
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return surface_from_positions(pts, faces)


PRESETS = {
    "cube": cube_surface,
    "torus": square_torus,
    "double-triangle": double_triangle,
    "triangle": single_triangle,
    "tetrahedron": regular_tetrahedron,
}


# ---------------------------------------------------------------- I/O

def surface_to_dict(surface: ConeSurface) -> dict:
    """JSON document: per-face edge ids, explicit half-edge gluing, per-edge lengths.

    Side ``i`` of face ``f`` (the side opposite local corner ``i``) is
    half-edge ``3*f + i``; ``faces[f][i]`` is that side's edge id and
    ``lengths[e]`` the length of edge ``e``.
    """
    tri = surface.combinatorics
    h = np.arange(3 * tri.n_faces)
    pairs = [[int(a), int(b)] for a, b in zip(h, tri.twin) if b > a]
    doc = {
        "faces": tri.edge_of_halfedge.reshape(-1, 3).tolist(),
        "gluing": pairs,
        "lengths": [float(x) for x in surface.edge_lengths],
    }
    if surface.positions is not None:
        doc["positions"] = surface.positions.tolist()
        doc["vertex_faces"] = tri.faces.tolist()
    return doc


def surface_from_dict(doc: dict) -> ConeSurface:
    faces = np.asarray(doc["faces"], dtype=np.int64)
    tri = build_triangulation(faces, doc.get("gluing"))
    lengths = np.asarray(doc["lengths"], dtype=float)
    if lengths.ndim == 1:
        # lengths indexed by the document's edge labels
        if faces.max() >= lengths.size:
            raise ValueError("edge label without a length")
        lengths = lengths[faces]
    positions = doc.get("positions")
    if positions is not None:
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (tri.vertex_count, 3):
            positions = None
    return glue_triangles(tri, lengths, positions)


def load_surface(path) -> ConeSurface:
    return surface_from_dict(json.loads(Path(path).read_text()))


def save_surface(surface: ConeSurface, path) -> None:
    Path(path).write_text(json.dumps(surface_to_dict(surface)))


def obj_text(surface: ConeSurface, polylines: Iterable[Sequence[Sequence[float]]] = ()) -> str:
    """Wavefront OBJ: the known embedding if any, otherwise a flat per-face layout."""
    lines = ["# alexsurf cone surface"]
    tri = surface.combinatorics
    if surface.positions is not None:
        for p in surface.positions:
            lines.append("v %.9g %.9g %.9g" % tuple(p))
        for a, b, c in tri.faces:
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
        nv = len(surface.positions)
    else:
        lay = surface.layouts
        span = float(surface.lengths.max()) * 1.25
        cols = max(1, int(math.ceil(math.sqrt(tri.n_faces))))
        for f in range(tri.n_faces):
            ox, oy = (f % cols) * span, (f // cols) * span
            for x, y in lay[f]:
                lines.append("v %.9g %.9g 0" % (x + ox, y + oy))
            lines.append(f"f {3 * f + 1} {3 * f + 2} {3 * f + 3}")
        nv = 3 * tri.n_faces
    for poly in polylines:
        poly = list(poly)
        for p in poly:
            p = list(p) + [0.0] * (3 - len(p))
            lines.append("v %.9g %.9g %.9g" % tuple(p[:3]))
        idx = " ".join(str(nv + k + 1) for k in range(len(poly)))
        lines.append(f"l {idx}")
        nv += len(poly)
    return "\n".join(lines) + "\n"

"""Command-line entry point: ``alexsurf <group> <verb> [options]``.

Every verb writes its machine output (CSV, JSON or OBJ) atomically to
``--out`` together with ``<out>.manifest.json`` recording the verb, the
options and the library version, and prints a short summary on standard
output. Floats are printed with 9 significant digits.

Exit status is 0 on success, 2 on usage errors (bad options, unreadable
input files) and 1 on domain errors, whose class name is printed.

The only environment variable read is ``ALEXSURF_THREADS``, the number of
worker threads used by batch distance queries (default 1).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import AlexandrovError

DEFAULT_SEED = 0
DEFAULT_SURFACE_LEVEL = 3
DEFAULT_GALLERY_GRID = 64
DEFAULT_PAIRS = 24
THREADS_ENV = "ALEXSURF_THREADS"


class UsageError(Exception):
    """Bad command-line input; exit status 2."""


def fmt(x: float) -> str:
    return f"{float(x):.9g}"


def _fmt_complex(z: complex) -> str:
    if not np.isfinite(z):
        return "inf"
    return f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}j"


# ---------------------------------------------------------------- output

def write_atomic(path, text: str) -> None:
    """Write ``text`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_outputs(args, text: str, extra: dict | None = None) -> None:
    """Write the main output and its manifest (only when ``--out`` is given)."""
    out = getattr(args, "out", None)
    if out is None:
        return
    write_atomic(out, text)
    options = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("group", "verb", "func")}
    manifest = {"verb": f"{args.group} {args.verb}", "options": options, "version": __version__}
    if extra:
        manifest.update(extra)
    write_atomic(manifest_path(out), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map(f: Callable, items: list) -> list:
    n = _threads()
    if n == 1 or len(items) < 2:
        return [f(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(f, items))


# ---------------------------------------------------------------- parsing helpers

def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    return json.loads(text)


def parse_number(s: str) -> float:
    """A float, a fraction such as ``1/4`` or a multiple of pi such as ``pi/2``."""
    t = s.strip().lower().replace(" ", "")
    try:
        if "pi" in t:
            head, _, tail = t.partition("pi")
            coef = 1.0 if head in ("", "+") else -1.0 if head == "-" else float(Fraction(head.rstrip("*")))
            div = float(Fraction(tail[1:])) if tail.startswith("/") else 1.0 if tail == "" else None
            if div is None:
                raise ValueError
            return coef * math.pi / div
        return float(Fraction(t))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {s!r}") from None


def _number(s: str) -> float:
    try:
        return parse_number(s)
    except UsageError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def parse_ladder(text: str, name: str) -> list[float]:
    """``name=a,b,c`` or ``name=a..b`` (doubling or halving from a to b)."""
    key, sep, body = text.partition("=")
    if not sep or key.strip() != name:
        raise UsageError(f"ladder must look like {name}=..., got {text!r}")
    if ".." in body:
        a, _, b = body.partition("..")
        lo, hi = parse_number(a), parse_number(b)
        if lo <= 0 or hi <= 0:
            raise UsageError("ladder ends must be positive")
        factor = 2.0 if hi >= lo else 0.5
        out, x = [], lo
        while (x <= hi * (1 + 1e-12)) if factor > 1 else (x >= hi * (1 - 1e-12)):
            out.append(x)
            x *= factor
        if not out or not math.isclose(out[-1], hi, rel_tol=1e-9):
            raise UsageError(f"{hi!r} is not reached from {lo!r} by doubling or halving")
        return out
    vals = [parse_number(v) for v in body.split(",") if v.strip()]
    if not vals:
        raise UsageError(f"empty ladder {text!r}")
    return vals


def parse_surface_point(surface, s: str):
    """``F:a,b,c`` (face and barycentrics) or ``vK`` (vertex K)."""
    from .geodesics import SurfacePoint, vertex_point

    t = s.strip()
    try:
        if t.startswith("v"):
            v = int(t[1:])
            if not 0 <= v < surface.combinatorics.vertex_count:
                raise UsageError(f"vertex {v} out of range")
            return vertex_point(surface, v)
        f, _, bary = t.partition(":")
        b = tuple(parse_number(x) for x in bary.split(","))
        face = int(f)
        if not 0 <= face < surface.combinatorics.n_faces or len(b) != 3:
            raise ValueError
        return SurfacePoint(face, b)
    except ValueError:
        raise UsageError(f"bad surface point {s!r}; use F:a,b,c or vK") from None


def parse_complex(s: str) -> complex:
    t = s.strip().lower().replace(" ", "")
    if t in ("inf", "infinity"):
        return complex("inf")
    try:
        return complex(t.replace("i", "j"))
    except ValueError:
        raise UsageError(f"bad chart point {s!r}") from None


def parse_background_point(bg, s: str) -> np.ndarray:
    """Comma-separated coordinates; on the sphere also ``N`` or ``S``."""
    t = s.strip().upper()
    if bg.kind == "sphere" and t in ("N", "S"):
        return np.array([0.0, 0.0, 1.0 if t == "N" else -1.0])
    try:
        vals = [parse_number(v) for v in s.split(",")]
    except UsageError:
        raise UsageError(f"bad point {s!r}") from None
    if len(vals) != bg.dim:
        raise UsageError(f"{bg.kind} points have {bg.dim} coordinates, got {s!r}")
    return bg.points(vals)[0]


# ---------------------------------------------------------------- surface verbs

def _preset_surface(name: str, side: float):
    from .mesh_core import PRESETS

    if name in ("double-triangle", "triangle"):
        return PRESETS[name](side, side, side)
    return PRESETS[name](side)


def _load_surface(path):
    from .mesh_core import surface_from_dict

    return surface_from_dict(_read_json(path))


def cmd_surface_build(args) -> None:
    from .mesh_core import euler_characteristic, surface_to_dict

    if (args.preset is None) == (args.input is None):
        raise UsageError("give exactly one of --preset or --in")
    s = _preset_surface(args.preset, args.side) if args.preset else _load_surface(args.input)
    tri = s.combinatorics
    print(f"faces {tri.n_faces}")
    print(f"vertices {tri.vertex_count}")
    print(f"euler_characteristic {euler_characteristic(tri)}")
    write_outputs(args, json.dumps(surface_to_dict(s)) + "\n")


def cmd_surface_curvature(args) -> None:
    from .curvature import vertex_curvature_atoms

    s = _load_surface(args.input)
    mu = vertex_curvature_atoms(s)
    print(f"atoms {len(mu.atoms)}")
    print(f"total {fmt(mu.total_mass)}")
    write_outputs(args, json.dumps(mu.to_dict(), indent=1) + "\n")


def cmd_surface_gauss_bonnet(args) -> None:
    from .curvature import boundary_turning, gauss_bonnet_csv, gauss_bonnet_residual, vertex_curvature_atoms
    from .mesh_core import euler_characteristic

    s = _load_surface(args.input)
    mu = vertex_curvature_atoms(s)
    chi = euler_characteristic(s.combinatorics)
    bd = boundary_turning(s)
    residual = gauss_bonnet_residual(mu, chi, bd)
    total = mu.total_mass + bd.total
    print(f"total {fmt(total)}")
    print(f"expected {fmt(2 * math.pi * chi)}")
    print(f"residual {fmt(residual)}")
    write_outputs(args, gauss_bonnet_csv([(Path(args.input).stem, total, 2 * math.pi * chi)]))


def _bary_text(p) -> str:
    return " ".join(fmt(b) for b in p.bary)


def cmd_surface_distance(args) -> None:
    from .geodesics import intrinsic_distance, sample_pairs, sample_surface_points

    s = _load_surface(args.input)
    if args.pairs is not None:
        if args.source is not None or args.target is not None:
            raise UsageError("--pairs excludes --from/--to")
        pts = sample_surface_points(s, 2 * args.pairs, args.seed)
        pairs = sample_pairs(pts, args.pairs, args.seed)
    else:
        if args.source is None or args.target is None:
            raise UsageError("give --from and --to, or --pairs")
        pairs = [(parse_surface_point(s, args.source), parse_surface_point(s, args.target))]
    dists = _map(lambda xy: intrinsic_distance(s, xy[0], xy[1], args.level), pairs)
    rows = [(x.face, _bary_text(x), y.face, _bary_text(y), args.level, d) for (x, y), d in zip(pairs, dists)]
    if len(rows) == 1:
        print(f"distance {fmt(dists[0])}")
    else:
        print(f"pairs {len(rows)}")
        print(f"max_distance {fmt(max(dists))}")
    write_outputs(args, _csv(("x_face", "x_bary", "y_face", "y_bary", "level", "distance"), rows))


def cmd_surface_export_obj(args) -> None:
    from .geodesics import shortest_path_polyline
    from .mesh_core import obj_text

    s = _load_surface(args.input)
    polylines = []
    if (args.source is None) != (args.target is None):
        raise UsageError("give both --from and --to to export a path")
    if args.source is not None:
        d, poly = shortest_path_polyline(s, parse_surface_point(s, args.source), parse_surface_point(s, args.target), args.level)
        polylines.append(poly)
        print(f"path_length {fmt(d)}")
    print(f"faces {s.combinatorics.n_faces}")
    write_outputs(args, obj_text(s, polylines))


# ---------------------------------------------------------------- gallery verbs

def _gallery_metric(args):
    from .conformal import make_example_metric

    params = {}
    if args.theta is not None:
        params["theta"] = args.theta
    if args.cell_radius is not None:
        params["cell_radius"] = args.cell_radius
    return make_example_metric(args.kind, **params)


def cmd_gallery_show(args) -> None:
    m = _gallery_metric(args)
    mu = m.measure
    print(f"name {m.name}")
    print(f"domain {m.domain}")
    for k, v in sorted(m.params.items()):
        print(f"{k} {fmt(v)}")
    print(f"cone_points {' '.join(_fmt_complex(p) for p in m.cone_points) or '-'}")
    print(f"cusps {' '.join(_fmt_complex(p) for p in m.cusps) or '-'}")
    print(f"total_curvature {fmt(mu.total_mass)}")
    write_outputs(args, json.dumps(mu.to_dict(), indent=1) + "\n")


def cmd_gallery_distance(args) -> None:
    from .conformal import conformal_distance

    m = _gallery_metric(args)
    z1, z2 = parse_complex(args.source), parse_complex(args.target)
    d = conformal_distance(m, z1, z2, n=args.grid)
    print(f"distance {fmt(d)}")
    write_outputs(args, _csv(("z1", "z2", "grid", "distance"), [(_fmt_complex(z1), _fmt_complex(z2), args.grid, d)]))


def cmd_gallery_curvature_grid(args) -> None:
    from .conformal import log_factor, singular_mask, smooth_curvature_from_factor

    m = _gallery_metric(args)
    u = log_factor(m, args.half_width, args.grid)
    pts = [p for p in (*m.cone_points, *m.cusps) if np.isfinite(p)]
    mask = singular_mask(u, pts, m.seams)
    K = smooth_curvature_from_factor(u, 0.0, mask, max_masked=0.5)
    X, Y = u.coords()
    rows = zip(X.ravel(), Y.ravel(), np.exp(2 * u.values).ravel(), u.values.ravel(), K.values.ravel())
    ok = np.isfinite(K.values)
    print(f"nodes {u.values.size}")
    print(f"curvature_nodes {int(ok.sum())}")
    if ok.any():
        print(f"curvature_min {fmt(K.values[ok].min())}")
        print(f"curvature_max {fmt(K.values[ok].max())}")
    write_outputs(args, _csv(("x", "y", "rho", "log_factor", "curvature"), rows))


# ---------------------------------------------------------------- prescribe verbs

def _load_prescribed(path):
    from .potential import PrescribedMeasure

    return PrescribedMeasure.from_dict(_read_json(path))


def _resolution(args, bg) -> int | None:
    return args.level if bg.kind == "sphere" else args.grid


def cmd_prescribe_build(args) -> None:
    from .potential import build_alexandrov_metric

    omega = _load_prescribed(args.input)
    metric = build_alexandrov_metric(omega.background, omega)
    bg = metric.background
    print(f"background {bg.kind}")
    print(f"total_mass {fmt(omega.total_mass)}")
    for p, m in omega.atoms:
        print(f"atom {' '.join(fmt(c) for c in p)} mass {fmt(m)} cone_angle {fmt(2 * math.pi - m)}")
    if args.out is None:
        return
    out = Path(args.out)
    charts = ("square",) if bg.kind == "torus" else ("north", "south")
    files = {}
    for chart in charts:
        g = metric.factor_grid(chart, args.factor_grid, args.half_width if bg.kind == "sphere" else 0.5)
        name = f"{out.stem}.{chart}.csv"
        write_atomic(out.with_name(name), g.to_csv("rho"))
        files[chart] = name
    doc = {
        "measure": omega.to_dict(),
        "potential_constant": float(metric.u.constant),
        "charts": files,
    }
    write_outputs(args, json.dumps(doc, indent=1) + "\n", {"outputs": [out.name, *files.values()]})


def cmd_prescribe_distance(args) -> None:
    from .potential import build_alexandrov_metric, metric_distance

    omega = _load_prescribed(args.input)
    bg = omega.background
    metric = build_alexandrov_metric(bg, omega)
    if args.pairs is not None:
        if args.source is not None or args.target is not None:
            raise UsageError("--pairs excludes --from/--to")
        pts = bg.sample(2 * args.pairs, args.seed)
        pairs = [(pts[2 * i], pts[2 * i + 1]) for i in range(args.pairs)]
    else:
        if args.source is None or args.target is None:
            raise UsageError("give --from and --to, or --pairs")
        pairs = [(parse_background_point(bg, args.source), parse_background_point(bg, args.target))]
    res = _resolution(args, bg)
    dists = _map(lambda xy: metric_distance(metric, xy[0], xy[1], res), pairs)
    if len(dists) == 1:
        print(f"distance {fmt(dists[0])}")
    else:
        print(f"pairs {len(dists)}")
        print(f"max_distance {fmt(max(dists))}")
    rows = [(" ".join(fmt(c) for c in x), " ".join(fmt(c) for c in y), d) for (x, y), d in zip(pairs, dists)]
    write_outputs(args, _csv(("x", "y", "distance"), rows))


def cmd_prescribe_verify(args) -> None:
    from .potential import build_alexandrov_metric, verify_metric

    omega = _load_prescribed(args.input)
    metric = build_alexandrov_metric(omega.background, omega)
    rep = verify_metric(metric, _resolution(args, omega.background), n_rays=args.rays)
    print(f"gauss_bonnet_residual {fmt(rep['gauss_bonnet_residual'])}")
    for c in rep["cones"]:
        print(f"cone {' '.join(fmt(x) for x in c['point'])} expected {fmt(c['expected_angle'])} measured {fmt(c['measured_angle'])}")
    print(f"smooth_density_error {fmt(rep['smooth_density_error'])}")
    write_outputs(args, json.dumps(rep, indent=1) + "\n")


# ---------------------------------------------------------------- lab verbs

def cmd_lab_lantern(args) -> None:
    from .convergence import lantern_table

    ns = parse_ladder(args.ladder, "n")
    if any(n != int(n) or n < 3 for n in ns):
        raise UsageError("lantern ladder entries must be integers >= 3")
    table = lantern_table(args.r, args.h, [int(n) for n in ns], rows=args.rows)
    for n, area in zip(table.column("n"), table.column("area")):
        print(f"n {int(n)} area {fmt(area)}")
    print(f"target {fmt(2 * math.pi * args.r * args.h)}")
    write_outputs(args, table.to_csv(), {"table": table.manifest})


def _table_summary(table, cols: Sequence[str]) -> None:
    for row in table.rows:
        print(" ".join(f"{k} {fmt(v)}" for k, v in zip((table.parameter, *table.columns), row) if k in (table.parameter, *cols)))
    for c in cols:
        print(f"{c}_strictly_decreasing {str(table.strictly_decreasing(c)).lower()}")


def cmd_lab_reshetnyak(args) -> None:
    from .convergence import reshetnyak_experiment

    omega = _load_prescribed(args.input)
    eps = parse_ladder(args.ladder, "eps")
    table = reshetnyak_experiment(omega.background, omega, eps, args.pairs, args.seed, _resolution(args, omega.background))
    _table_summary(table, ("uniform_distance", "weak_distance"))
    write_outputs(args, table.to_csv(), {"table": table.manifest})


def cmd_lab_weak_distance(args) -> None:
    from .convergence import make_dictionary, weak_distance, weak_distance_table

    omega = _load_prescribed(args.input)
    if args.other is not None:
        if args.ladder is not None:
            raise UsageError("--other excludes --ladder")
        other = _load_prescribed(args.other)
        d = weak_distance(omega, other, make_dictionary(omega.background, args.seed))
        print(f"weak_distance {fmt(d)}")
        write_outputs(args, _csv(("a", "b", "weak_distance"), [(Path(args.input).name, Path(args.other).name, d)]))
        return
    eps = parse_ladder(args.ladder or "eps=1/4..1/16", "eps")
    table = weak_distance_table(omega, eps, args.seed)
    _table_summary(table, ("weak_distance",))
    write_outputs(args, table.to_csv(), {"table": table.manifest})


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _out(p, what: str) -> None:
    p.add_argument("--out", type=Path, help=f"{what}; a manifest is written to <out>.manifest.json")


def _seed(p) -> None:
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"seed of the sampled points and dictionary (default {DEFAULT_SEED})")


def _resolution_flags(p) -> None:
    p.add_argument("--level", type=int, default=None, help="sphere icosphere level of the distance graph (default 4)")
    p.add_argument("--grid", type=int, default=None, help="torus grid size of the distance graph (default 64)")


def _gallery_flags(p) -> None:
    from .conformal import GALLERY

    p.add_argument("--kind", required=True, choices=GALLERY)
    p.add_argument("--theta", type=_number, default=None, help="cone angle, e.g. pi/2 (cone only, default 2pi)")
    p.add_argument("--cell-radius", type=_number, default=None, help="cusp cell radius (pseudosphere only, default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alexsurf", description="Surfaces with bounded integral curvature.")
    parser.add_argument("--version", action="version", version=f"alexsurf {__version__}")
    groups = parser.add_subparsers(dest="group", metavar="GROUP", parser_class=_Parser)
    groups.required = True

    def verb(group_parsers, name, func, help):
        p = group_parsers.add_parser(name, help=help, description=help)
        p.set_defaults(func=func)
        return p

    # surface
    g = groups.add_parser("surface", help="polyhedral cone surfaces").add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    g.required = True
    p = verb(g, "build", cmd_surface_build, "validate a gluing document or build a preset surface")
    p.add_argument("--in", dest="input", type=Path)
    p.add_argument("--preset", choices=("cube", "torus", "tetrahedron", "double-triangle", "triangle"))
    p.add_argument("--side", type=_number, default=1.0, help="preset edge length (default 1)")
    _out(p, "surface JSON")
    p = verb(g, "curvature", cmd_surface_curvature, "vertex curvature atoms as JSON")
    p.add_argument("--in", dest="input", type=Path, required=True)
    _out(p, "curvature measure JSON")
    p = verb(g, "gauss-bonnet", cmd_surface_gauss_bonnet, "total curvature against 2 pi chi")
    p.add_argument("--in", dest="input", type=Path, required=True)
    _out(p, "CSV report")
    for name, func, help in (("distance", cmd_surface_distance, "intrinsic distances"),
                             ("export-obj", cmd_surface_export_obj, "OBJ export with an optional shortest path")):
        p = verb(g, name, func, help)
        p.add_argument("--in", dest="input", type=Path, required=True)
        p.add_argument("--from", dest="source", help="F:a,b,c (face, barycentrics) or vK (vertex)")
        p.add_argument("--to", dest="target", help="F:a,b,c or vK")
        p.add_argument("--level", type=int, default=DEFAULT_SURFACE_LEVEL,
                       help=f"Steiner refinement level, 2^level points per edge (default {DEFAULT_SURFACE_LEVEL})")
        if name == "distance":
            p.add_argument("--pairs", type=int, default=None, help="number of seeded random pairs instead of --from/--to")
            _seed(p)
            _out(p, "CSV (x_face, x_bary, y_face, y_bary, level, distance)")
        else:
            _out(p, "OBJ file")

    # gallery
    g = groups.add_parser("gallery", help="singular conformal metrics").add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    g.required = True
    p = verb(g, "show", cmd_gallery_show, "parameters and curvature measure of a gallery metric")
    _gallery_flags(p)
    _out(p, "curvature measure JSON")
    p = verb(g, "distance", cmd_gallery_distance, "chart distance between two points (inf allowed)")
    _gallery_flags(p)
    p.add_argument("--from", dest="source", required=True, help="complex chart point, e.g. 0.5+0.25j or inf")
    p.add_argument("--to", dest="target", required=True)
    p.add_argument("--grid", type=int, default=DEFAULT_GALLERY_GRID, help=f"finest chart grid size (default {DEFAULT_GALLERY_GRID})")
    _out(p, "CSV (z1, z2, grid, distance)")
    p = verb(g, "curvature-grid", cmd_gallery_curvature_grid, "density, log factor and recovered curvature on a grid")
    _gallery_flags(p)
    p.add_argument("--grid", type=int, default=DEFAULT_GALLERY_GRID, help=f"nodes per half side (default {DEFAULT_GALLERY_GRID})")
    p.add_argument("--half-width", type=_number, default=2.0, help="half side of the square (default 2)")
    _out(p, "CSV (x, y, rho, log_factor, curvature)")

    # prescribe
    g = groups.add_parser("prescribe", help="metrics with a prescribed curvature measure").add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    g.required = True
    p = verb(g, "build", cmd_prescribe_build, "build the metric and export chart factor grids")
    p.add_argument("--in", dest="input", type=Path, required=True, help="prescribed measure JSON")
    p.add_argument("--factor-grid", type=int, default=32, help="chart grid nodes per half side (default 32)")
    p.add_argument("--half-width", type=_number, default=1.0, help="sphere chart half side (default 1)")
    _out(p, "metric JSON; chart grids go to <stem>.<chart>.csv")
    p = verb(g, "distance", cmd_prescribe_distance, "distances of the constructed metric")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--from", dest="source", help="x,y,z on the sphere (or N, S); x,y on the torus")
    p.add_argument("--to", dest="target")
    p.add_argument("--pairs", type=int, default=None, help="number of seeded random pairs instead of --from/--to")
    _seed(p)
    _resolution_flags(p)
    _out(p, "CSV (x, y, distance)")
    p = verb(g, "verify", cmd_prescribe_verify, "Gauss-Bonnet, cone-angle probes and smooth density check")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--rays", type=int, default=32, help="rays per circle probe (default 32)")
    _resolution_flags(p)
    _out(p, "report JSON")

    # lab
    g = groups.add_parser("lab", help="convergence experiments").add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    g.required = True
    p = verb(g, "lantern", cmd_lab_lantern, "Schwarz lantern area table")
    p.add_argument("--r", type=_number, default=1.0, help="cylinder radius (default 1)")
    p.add_argument("--h", type=_number, default=1.0, help="cylinder height (default 1)")
    p.add_argument("--ladder", default="n=8..64", help="n=a..b (doubling) or n=a,b,c (default n=8..64)")
    p.add_argument("--rows", choices=("equal", "cube"), default="equal", help="m = n or m = n^3 (default equal)")
    _out(p, "CSV table")
    p = verb(g, "reshetnyak", cmd_lab_reshetnyak, "mollified metrics against the exact one")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--ladder", default="eps=1/4..1/16", help="eps=a..b (halving) or eps=a,b,c (default eps=1/4..1/16)")
    p.add_argument("--pairs", type=int, default=DEFAULT_PAIRS, help=f"sampled point pairs (default {DEFAULT_PAIRS})")
    _seed(p)
    _resolution_flags(p)
    _out(p, "CSV table")
    p = verb(g, "weak-distance", cmd_lab_weak_distance, "dictionary weak distance between measures")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--other", type=Path, default=None, help="second measure; otherwise mollifications of --in")
    p.add_argument("--ladder", default=None, help="eps ladder for mollifications (default eps=1/4..1/16)")
    _seed(p)
    _out(p, "CSV table")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (AlexandrovError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())

"""Quadrature rules shared by the chart, sphere and torus code.

Line integrals use 3-point Gauss-Legendre per piece. Near a singular point
the pieces are graded geometrically towards it; when the path ends exactly
on the singularity the last sliver is closed with a fitted power law
c * s**beta, which is exact for cone densities |z|**(2*beta).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

_X3, _W3 = roots_legendre(3)
GAUSS3_NODES = 0.5 * (_X3 + 1.0)
GAUSS3_WEIGHTS = 0.5 * _W3


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return a + (b - a) * 0.5 * (x + 1.0), 0.5 * (b - a) * w


_RULES = {3: (GAUSS3_NODES, GAUSS3_WEIGHTS)}


def _rule(n: int):
    if n not in _RULES:
        _RULES[n] = gauss_legendre(n)
    return _RULES[n]


def gauss_pieces(g: Callable[[np.ndarray], np.ndarray], edges: np.ndarray, n: int = 3) -> float:
    """Sum of n-point Gauss rules over consecutive intervals given by ``edges``."""
    x, w = _rule(n)
    a, b = edges[:-1], edges[1:]
    t = a[:, None] + (b - a)[:, None] * x[None, :]
    vals = g(t.ravel()).reshape(t.shape)
    return float(np.sum((b - a)[:, None] * w[None, :] * vals))


def graded_edges(t0: float, t1: float, toward: float, stop: float) -> np.ndarray:
    """Breakpoints on [t0, t1] halving towards the endpoint ``toward`` until ``stop``."""
    span = t1 - t0
    k = max(1, min(60, int(math.ceil(math.log2(max(span / max(stop, 1e-300), 2.0))))))
    s = span * 2.0 ** -np.arange(0, k + 1, dtype=float)
    if toward == t1:
        return np.append(t1 - s, t1)
    return np.concatenate([[t0], (t0 + s)[::-1]])


def power_tail(g: Callable[[np.ndarray], np.ndarray], at: float, eps: float) -> float:
    """Integral over the sliver of width ``eps`` ending at the singular parameter ``at``.

    ``eps`` is signed: the sliver is [at, at+eps] or [at+eps, at].
    """
    f1, f2 = g(np.array([at + eps, at + 0.5 * eps]))
    if not (np.isfinite(f1) and np.isfinite(f2)) or f1 <= 0 or f2 <= 0:
        return float(abs(eps) * max(f1, 0.0)) if np.isfinite(f1) else math.inf
    beta = -math.log2(f2 / f1)
    if beta <= -1.0 + 1e-9:
        return math.inf
    return abs(eps) * f1 / (beta + 1.0)


def segment_integral(
    g: Callable[[np.ndarray], np.ndarray],
    focus: float | None = None,
    gap: float = 0.0,
    breaks=(),
    touching_tol: float = 1e-12,
) -> float:
    """Integral of ``g`` over [0, 1].

    ``focus`` is the parameter of the closest approach to a singular point
    and ``gap`` the relative distance of that approach. ``breaks`` are
    parameters where ``g`` jumps (seams).
    """
    cuts = sorted({0.0, 1.0, *[float(b) for b in breaks if 0.0 < b < 1.0]})
    if focus is None:
        return gauss_pieces(g, np.array(cuts))
    f = min(max(float(focus), 0.0), 1.0)
    for c in cuts:
        if abs(f - c) < 1e-12:
            f = c
    total = 0.0
    touching = gap <= touching_tol
    stop = max(gap, 2.0 ** -40)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a < f < b:
            parts = [(a, f, f), (f, b, f)]
        elif f <= a + 1e-15:
            parts = [(a, b, a)] if abs(f - a) < 1e-15 else [(a, b, None)]
        elif f >= b - 1e-15:
            parts = [(a, b, b)] if abs(f - b) < 1e-15 else [(a, b, None)]
        else:
            parts = [(a, b, None)]
        for lo, hi, tw in parts:
            if hi - lo <= 0:
                continue
            if tw is None:
                total += gauss_pieces(g, np.array([lo, hi]), 6)
                continue
            e = graded_edges(lo, hi, tw, stop)
            if touching:
                if tw == hi:
                    total += gauss_pieces(g, e[:-1], 6) + power_tail(g, hi, -(e[-1] - e[-2]))
                else:
                    total += gauss_pieces(g, e[1:], 6) + power_tail(g, lo, e[1] - e[0])
            else:
                total += gauss_pieces(g, e, 6)
    return total


def closest_param(za: complex, zb: complex, p: complex) -> tuple[float, float]:
    """Parameter in [0, 1] of the closest point of segment [za, zb] to p, and that distance."""
    d = zb - za
    L2 = abs(d) ** 2
    if L2 == 0:
        return 0.0, abs(p - za)
    t = ((p - za) * d.conjugate()).real / L2
    t = min(max(t, 0.0), 1.0)
    return t, abs(za + t * d - p)


def circle_crossings(za, zb, radius: float) -> np.ndarray:
    """Parameters in (0, 1) where segments [za, zb] cross |z| = radius (NaN if none); shape (n, 2)."""
    za = np.asarray(za, dtype=complex)
    zb = np.asarray(zb, dtype=complex)
    d = zb - za
    A = np.abs(d) ** 2
    B = 2.0 * (za * d.conjugate()).real
    C = np.abs(za) ** 2 - radius ** 2
    disc = B * B - 4 * A * C
    out = np.full(za.shape + (2,), np.nan)
    ok = (disc > 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        t1 = (-B - sq) / (2 * A)
        t2 = (-B + sq) / (2 * A)
    for k, t in enumerate((t1, t2)):
        good = ok & (t > 1e-14) & (t < 1 - 1e-14)
        out[..., k] = np.where(good, t, np.nan)
    return out

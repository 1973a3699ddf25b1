"""Pure numpy implementations of the Green-kernel summations.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature; ``alexsurf.kernels`` picks one at import time.
"""

import numpy as np
from scipy.special import exp1

INV_2PI = 1.0 / (2.0 * np.pi)
INV_4PI = 1.0 / (4.0 * np.pi)
COINCIDENT = 1e-14

# Ewald split of the unit square torus kernel at heat time 1/(4 pi):
# both lattice sums then decay like exp(-pi |.|^2) and |n|, |k| <= 3 is
# enough for ~1e-16.
EWALD_REACH = 3


def _reciprocal_table(reach=EWALD_REACH):
    ks = []
    for a in range(-reach, reach + 1):
        for b in range(-reach, reach + 1):
            if (a, b) > (0, 0):
                ks.append((a, b))
    ks = np.array(ks, dtype=float)
    k2 = (ks ** 2).sum(axis=1)
    # factor 2: k and -k fold into one cosine
    coef = 2.0 * np.exp(-np.pi * k2) / (4.0 * np.pi ** 2 * k2)
    return ks, coef


_KS, _KCOEF = _reciprocal_table()


def torus_green_diff(dx, dy, reach=EWALD_REACH):
    """Zero-mean Green function of the unit flat torus at offsets (dx, dy).

    ``reach`` bounds both lattice sums; only this reference implementation
    accepts values other than the default.
    """
    if reach == EWALD_REACH:
        ks, kcoef = _KS, _KCOEF
    else:
        ks, kcoef = _reciprocal_table(reach)
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    dx = dx - np.floor(dx + 0.5)
    dy = dy - np.floor(dy + 0.5)
    out = np.full(np.broadcast(dx, dy).shape, -INV_4PI)
    for a in range(-reach, reach + 1):
        for b in range(-reach, reach + 1):
            r2 = (dx + a) ** 2 + (dy + b) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                out = out + INV_4PI * exp1(np.pi * r2)
    for (a, b), c in zip(ks, kcoef):
        out = out + c * np.cos(2.0 * np.pi * (a * dx + b * dy))
    return out


def sphere_green_sum(targets, sources, weights):
    """sum_j w_j G(x_i, y_j) on the unit sphere; coincident pairs are skipped."""
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.zeros(len(targets))
    chunk = max(1, 2_000_000 // max(1, len(sources)))
    for s in range(0, len(targets), chunk):
        t = targets[s:s + chunk]
        chord = np.sqrt(((t[:, None, :] - sources[None, :, :]) ** 2).sum(axis=2))
        ok = chord > COINCIDENT
        with np.errstate(divide="ignore"):
            g = -INV_2PI * (np.log(np.where(ok, chord, 1.0) / 2.0) + 0.5)
        out[s:s + chunk] = (np.where(ok, g, 0.0) * weights[None, :]).sum(axis=1)
    return out


def torus_green_sum(targets, sources, weights):
    """sum_j w_j G(x_i - y_j) on the unit flat torus; coincident pairs skipped."""
    targets = np.ascontiguousarray(targets, dtype=float)
    sources = np.ascontiguousarray(sources, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    out = np.zeros(len(targets))
    chunk = max(1, 200_000 // max(1, len(sources)))
    for s in range(0, len(targets), chunk):
        t = targets[s:s + chunk]
        dx = t[:, None, 0] - sources[None, :, 0]
        dy = t[:, None, 1] - sources[None, :, 1]
        rx = dx - np.floor(dx + 0.5)
        ry = dy - np.floor(dy + 0.5)
        ok = rx * rx + ry * ry > COINCIDENT ** 2
        g = torus_green_diff(np.where(ok, dx, 0.5), np.where(ok, dy, 0.5))
        out[s:s + chunk] = (np.where(ok, g, 0.0) * weights[None, :]).sum(axis=1)
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Green-kernel summations (see ``_kernels_py`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, exp, floor, M_PI
from scipy.special.cython_special cimport exp1

cnp.import_array()

cdef double INV_2PI = 1.0 / (2.0 * M_PI)
cdef double INV_4PI = 1.0 / (4.0 * M_PI)
cdef double COINCIDENT = 1e-14
cdef int REACH = 3

cdef double[:, ::1] _KS
cdef double[::1] _KCOEF


def _init_tables():
    global _KS, _KCOEF
    ks = []
    for a in range(-REACH, REACH + 1):
        for b in range(-REACH, REACH + 1):
            if (a, b) > (0, 0):
                ks.append((a, b))
    ks_arr = np.array(ks, dtype=float)
    k2 = (ks_arr ** 2).sum(axis=1)
    _KS = np.ascontiguousarray(ks_arr)
    _KCOEF = np.ascontiguousarray(2.0 * np.exp(-np.pi * k2) / (4.0 * np.pi ** 2 * k2))


_init_tables()


cdef inline double _torus_green(double dx, double dy) nogil:
    cdef double out = -INV_4PI
    cdef int a, b, j
    cdef double r2
    dx = dx - floor(dx + 0.5)
    dy = dy - floor(dy + 0.5)
    for a in range(-REACH, REACH + 1):
        for b in range(-REACH, REACH + 1):
            r2 = (dx + a) * (dx + a) + (dy + b) * (dy + b)
            out += INV_4PI * exp1(M_PI * r2)
    for j in range(_KS.shape[0]):
        out += _KCOEF[j] * cos(2.0 * M_PI * (_KS[j, 0] * dx + _KS[j, 1] * dy))
    return out


def torus_green_diff(dx, dy):
    cdef cnp.ndarray[double, ndim=1] x, y, out
    bx, by = np.broadcast_arrays(np.asarray(dx, dtype=float), np.asarray(dy, dtype=float))
    shape = bx.shape
    x = np.ascontiguousarray(bx.ravel())
    y = np.ascontiguousarray(by.ravel())
    out = np.empty(x.shape[0])
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        out[i] = _torus_green(x[i], y[i])
    return out.reshape(shape)


def sphere_green_sum(targets, sources, weights):
    cdef double[:, ::1] t = np.ascontiguousarray(targets, dtype=float)
    cdef double[:, ::1] s = np.ascontiguousarray(sources, dtype=float)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(t.shape[0])
    cdef Py_ssize_t i, j
    cdef double acc, dx, dy, dz, chord
    with nogil:
        for i in range(t.shape[0]):
            acc = 0.0
            for j in range(s.shape[0]):
                dx = t[i, 0] - s[j, 0]
                dy = t[i, 1] - s[j, 1]
                dz = t[i, 2] - s[j, 2]
                chord = sqrt(dx * dx + dy * dy + dz * dz)
                if chord > COINCIDENT:
                    acc += w[j] * (-INV_2PI * (log(chord / 2.0) + 0.5))
            out[i] = acc
    return out


def torus_green_sum(targets, sources, weights):
    cdef double[:, ::1] t = np.ascontiguousarray(targets, dtype=float)
    cdef double[:, ::1] s = np.ascontiguousarray(sources, dtype=float)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=float)
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(t.shape[0])
    cdef Py_ssize_t i, j
    cdef double acc, dx, dy, rx, ry
    with nogil:
        for i in range(t.shape[0]):
            acc = 0.0
            for j in range(s.shape[0]):
                dx = t[i, 0] - s[j, 0]
                dy = t[i, 1] - s[j, 1]
                rx = dx - floor(dx + 0.5)
                ry = dy - floor(dy + 0.5)
                if rx * rx + ry * ry > COINCIDENT * COINCIDENT:
                    acc += w[j] * _torus_green(dx, dy)
            out[i] = acc
    return out

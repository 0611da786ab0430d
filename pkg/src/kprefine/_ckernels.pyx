# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: KDE grid accumulation and sparse EM passes.

Semantics and accumulation order match ``_kernels_np.py``; the compiled
path only removes Python/array overhead on the per-pair inner loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, sqrt

cnp.import_array()

BACKEND_NAME = "cython"

cdef double TWO_PI = 6.283185307179586476925287


def kde_accumulate(double[::1] xs, double[::1] ys, double[::1] mult,
                   int width, int height, double h, double cutoff):
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((height, width))
    cdef double[:, ::1] grid = out
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, gx, gy, x0, x1, y0, y1
    cdef double cx, cy, m, dx, dy, d2
    cdef double inv2h2 = 1.0 / (2.0 * h * h)
    cdef double cut2 = cutoff * cutoff

    for i in range(n):
        cx = xs[i]
        cy = ys[i]
        m = mult[i]
        x0 = <Py_ssize_t>ceil(cx - cutoff)
        x1 = <Py_ssize_t>(cx + cutoff)
        y0 = <Py_ssize_t>ceil(cy - cutoff)
        y1 = <Py_ssize_t>(cy + cutoff)
        if x0 < 0: x0 = 0
        if y0 < 0: y0 = 0
        if x1 > width - 1: x1 = width - 1
        if y1 > height - 1: y1 = height - 1
        for gy in range(y0, y1 + 1):
            dy = gy - cy
            for gx in range(x0, x1 + 1):
                dx = gx - cx
                d2 = dy * dy + dx * dx
                if d2 <= cut2:
                    grid[gy, gx] += m * exp(-d2 * inv2h2)
    return out


def em_pair_terms(double[::1] px, double[::1] py,
                  double[::1] mux, double[::1] muy,
                  double[::1] sigma, double[::1] alpha,
                  long[::1] pair_pt, long[::1] pair_comp, int mode):
    cdef Py_ssize_t n_pairs = pair_pt.shape[0]
    cdef Py_ssize_t n = px.shape[0]
    cdef cnp.ndarray[double, ndim=1] numer_arr = np.empty(n_pairs)
    cdef cnp.ndarray[double, ndim=1] denom_arr = np.zeros(n)
    cdef double[::1] numer = numer_arr
    cdef double[::1] denom = denom_arr
    cdef Py_ssize_t p, i, k
    cdef double dx, dy, d2, s, s2, g, w, d, tail, v

    for p in range(n_pairs):
        i = pair_pt[p]
        k = pair_comp[p]
        dx = px[i] - mux[k]
        dy = py[i] - muy[k]
        d2 = dx * dx + dy * dy
        s = sigma[k]
        s2 = s * s
        g = exp(-d2 / (2.0 * s2)) / (TWO_PI * s2)
        if mode == 0:
            w = 1.0
        elif mode == 1:
            d = sqrt(d2)
            if d < 3.0 * s:
                w = 1.0
            else:
                tail = d - 3.0 * s
                w = exp(-(tail * tail) / (2.0 * s2))
        else:
            w = 1.0 if d2 < 9.0 * s2 else 0.0
        v = alpha[k] * w * g
        numer[p] = v
        denom[i] += v
    return numer_arr, denom_arr


def em_moments(double[::1] px, double[::1] py,
               double[::1] numer, double[::1] denom,
               long[::1] pair_pt, long[::1] pair_comp, int n_comp):
    cdef Py_ssize_t n_pairs = pair_pt.shape[0]
    cdef cnp.ndarray[double, ndim=1] gsum_arr = np.zeros(n_comp)
    cdef cnp.ndarray[double, ndim=1] gx_arr = np.zeros(n_comp)
    cdef cnp.ndarray[double, ndim=1] gy_arr = np.zeros(n_comp)
    cdef double[::1] gsum = gsum_arr
    cdef double[::1] gx = gx_arr
    cdef double[::1] gy = gy_arr
    cdef Py_ssize_t p, i, k
    cdef double dz, gamma

    for p in range(n_pairs):
        i = pair_pt[p]
        dz = denom[i]
        if dz > 0.0:
            k = pair_comp[p]
            gamma = numer[p] / dz
            gsum[k] += gamma
            gx[k] += gamma * px[i]
            gy[k] += gamma * py[i]
    return gsum_arr, gx_arr, gy_arr


def em_spread(double[::1] px, double[::1] py,
              double[::1] numer, double[::1] denom,
              long[::1] pair_pt, long[::1] pair_comp,
              double[::1] mux_new, double[::1] muy_new, int n_comp):
    cdef Py_ssize_t n_pairs = pair_pt.shape[0]
    cdef cnp.ndarray[double, ndim=1] gd2_arr = np.zeros(n_comp)
    cdef double[::1] gd2 = gd2_arr
    cdef Py_ssize_t p, i, k
    cdef double dz, gamma, ddx, ddy

    for p in range(n_pairs):
        i = pair_pt[p]
        dz = denom[i]
        if dz > 0.0:
            k = pair_comp[p]
            gamma = numer[p] / dz
            ddx = px[i] - mux_new[k]
            ddy = py[i] - muy_new[k]
            gd2[k] += gamma * (ddx * ddx + ddy * ddy)
    return gd2_arr

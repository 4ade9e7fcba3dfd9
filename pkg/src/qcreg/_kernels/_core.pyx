# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: point location and LBS local-stiffness values.

Semantics match qcreg._kernels.fallback exactly; tests assert equivalence.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def locate_kernel(const double[:, ::1] uv, const cnp.int32_t[:, ::1] faces,
                  const cnp.int64_t[::1] cell_ptr, const cnp.int32_t[::1] cell_faces,
                  long nx, long ny, double x0, double y0,
                  double inv_dx, double inv_dy,
                  const double[:, ::1] queries, double tol):
    cdef Py_ssize_t nq = queries.shape[0]
    idx_arr = np.full(nq, -1, dtype=np.int64)
    bary_arr = np.zeros((nq, 3), dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[:, ::1] bary = bary_arr
    cdef Py_ssize_t qi, s
    cdef long ix, iy, cell, f, v0, v1, v2
    cdef double px, py, ax0, ay0, ax1, ay1, ax2, ay2
    cdef double w0, w1, w2, den, ssum

    for qi in range(nq):
        px = queries[qi, 0]
        py = queries[qi, 1]
        ix = <long>((px - x0) * inv_dx)
        iy = <long>((py - y0) * inv_dy)
        if ix < 0:
            ix = 0
        elif ix > nx - 1:
            ix = nx - 1
        if iy < 0:
            iy = 0
        elif iy > ny - 1:
            iy = ny - 1
        cell = ix * ny + iy
        for s in range(cell_ptr[cell], cell_ptr[cell + 1]):
            f = cell_faces[s]
            v0 = faces[f, 0]
            v1 = faces[f, 1]
            v2 = faces[f, 2]
            ax0 = uv[v0, 0] - px
            ay0 = uv[v0, 1] - py
            ax1 = uv[v1, 0] - px
            ay1 = uv[v1, 1] - py
            ax2 = uv[v2, 0] - px
            ay2 = uv[v2, 1] - py
            w0 = ax1 * ay2 - ax2 * ay1
            w1 = ax2 * ay0 - ax0 * ay2
            w2 = ax0 * ay1 - ax1 * ay0
            den = w0 + w1 + w2
            if den == 0.0:
                continue
            w0 /= den
            w1 /= den
            w2 /= den
            if w0 >= -tol and w1 >= -tol and w2 >= -tol:
                if w0 < 0.0:
                    w0 = 0.0
                if w1 < 0.0:
                    w1 = 0.0
                if w2 < 0.0:
                    w2 = 0.0
                ssum = w0 + w1 + w2
                idx[qi] = f
                bary[qi, 0] = w0 / ssum
                bary[qi, 1] = w1 / ssum
                bary[qi, 2] = w2 / ssum
                break
    return idx_arr, bary_arr


def lbs_local_values(const double[:, ::1] g, const double[:, ::1] h,
                     const double[::1] area, const double[:, ::1] alpha):
    cdef Py_ssize_t nf = g.shape[0]
    out_arr = np.empty((nf, 9), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t f
    cdef double inv2a, ar, a1, a2, a3
    cdef double A0, A1, A2, B0, B1, B2

    for f in range(nf):
        ar = area[f]
        inv2a = 1.0 / (2.0 * ar)
        A0 = (h[f, 1] - h[f, 2]) * inv2a
        A1 = (h[f, 2] - h[f, 0]) * inv2a
        A2 = (h[f, 0] - h[f, 1]) * inv2a
        B0 = (g[f, 2] - g[f, 1]) * inv2a
        B1 = (g[f, 0] - g[f, 2]) * inv2a
        B2 = (g[f, 1] - g[f, 0]) * inv2a
        a1 = alpha[f, 0]
        a2 = alpha[f, 1]
        a3 = alpha[f, 2]
        out[f, 0] = ar * (a1 * A0 * A0 + a2 * (A0 * B0 + A0 * B0) + a3 * B0 * B0)
        out[f, 1] = ar * (a1 * A0 * A1 + a2 * (A0 * B1 + A1 * B0) + a3 * B0 * B1)
        out[f, 2] = ar * (a1 * A0 * A2 + a2 * (A0 * B2 + A2 * B0) + a3 * B0 * B2)
        out[f, 3] = ar * (a1 * A1 * A0 + a2 * (A1 * B0 + A0 * B1) + a3 * B1 * B0)
        out[f, 4] = ar * (a1 * A1 * A1 + a2 * (A1 * B1 + A1 * B1) + a3 * B1 * B1)
        out[f, 5] = ar * (a1 * A1 * A2 + a2 * (A1 * B2 + A2 * B1) + a3 * B1 * B2)
        out[f, 6] = ar * (a1 * A2 * A0 + a2 * (A2 * B0 + A0 * B2) + a3 * B2 * B0)
        out[f, 7] = ar * (a1 * A2 * A1 + a2 * (A2 * B1 + A1 * B2) + a3 * B2 * B1)
        out[f, 8] = ar * (a1 * A2 * A2 + a2 * (A2 * B2 + A2 * B2) + a3 * B2 * B2)
    return out_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``.

Same signatures and results; scalar loops instead of whole-array passes.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, exp, lgamma, ceil, pi, fabs

cnp.import_array()


def wigner_d_stack(int lmax, double beta):
    cdef int c = lmax - 1
    cdef int size = 2 * c + 1
    out_arr = np.zeros((lmax, size, size), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double ch = cos(0.5 * beta)
    cdef double sh = sin(0.5 * beta)
    cdef double x = cos(beta)
    cdef int l, mp, m, jm, s0, pc, ps
    cdef double jj, a, b, e, logc, val, mm2, mp2
    for mp in range(-c, c + 1):
        for m in range(-c, c + 1):
            jm = abs(mp) if abs(mp) > abs(m) else abs(m)
            s0 = m - mp if m - mp > 0 else 0
            logc = 0.5 * (lgamma(jm + mp + 1) + lgamma(jm - mp + 1)
                          + lgamma(jm + m + 1) + lgamma(jm - m + 1))
            logc -= (lgamma(jm + m - s0 + 1) + lgamma(s0 + 1)
                     + lgamma(mp - m + s0 + 1) + lgamma(jm - mp - s0 + 1))
            pc = 2 * jm + m - mp - 2 * s0
            ps = mp - m + 2 * s0
            val = exp(logc) * (ch ** pc) * (sh ** ps)
            if (mp - m + s0) % 2 != 0:
                val = -val
            out[jm, c + mp, c + m] = val
            mm2 = <double>m * m
            mp2 = <double>mp * mp
            for l in range(jm + 1, lmax):
                jj = l - 1
                a = (jj + 1) * (2 * jj + 1) / sqrt(((jj + 1) * (jj + 1) - mm2) * ((jj + 1) * (jj + 1) - mp2))
                if jj > 0:
                    b = m * mp / (jj * (jj + 1))
                    e = (jj * jj - mm2) * (jj * jj - mp2)
                    e = sqrt(e) / (jj * (2 * jj + 1)) if e > 0 else 0.0
                else:
                    b = 0.0
                    e = 0.0
                if l - 2 >= jm:
                    out[l, c + mp, c + m] = a * ((x - b) * out[l - 1, c + mp, c + m]
                                                 - e * out[l - 2, c + mp, c + m])
                else:
                    out[l, c + mp, c + m] = a * (x - b) * out[l - 1, c + mp, c + m]
    return out_arr


def voxel_occupancy(indices, dims):
    grid_arr = np.zeros((int(dims[0]), int(dims[1]), int(dims[2])), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] grid = grid_arr
    cdef cnp.int64_t[:, ::1] idx = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1, 3)
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t p
    for p in range(n):
        grid[idx[p, 0], idx[p, 1], idx[p, 2]] = 1
    return grid_arr


def egi_counts(theta, phi, int bandwidth):
    cdef int n = 2 * bandwidth
    counts_arr = np.zeros((n, n), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] counts = counts_arr
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64).ravel()
    cdef double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64).ravel()
    cdef Py_ssize_t p
    cdef long j, k
    for p in range(th.shape[0]):
        j = <long>ceil((th[p] * (4 * bandwidth) / pi - 1.0) / 2.0 - 0.5)
        if j < 0:
            j = 0
        elif j > n - 1:
            j = n - 1
        k = <long>ceil(ph[p] * bandwidth / pi - 0.5) % n
        if k < 0:
            k += n
        counts[j, k] += 1
    return counts_arr

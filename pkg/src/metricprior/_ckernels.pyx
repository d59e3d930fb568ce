# cython: language_level=3
"""Compiled per-face kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int64_t idx_t


def scatter_blocks(const idx_t[:, ::1] faces, const double[:, :, ::1] blocks, Py_ssize_t n):
    cdef Py_ssize_t m = faces.shape[0], f, a, b
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                for b in range(3):
                    o[faces[f, a], faces[f, b]] += blocks[f, a, b]
    return out


def scatter_corners(const idx_t[:, ::1] faces, const double[:, ::1] values, Py_ssize_t n):
    cdef Py_ssize_t m = faces.shape[0], f, a
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                o[faces[f, a]] += values[f, a]
    return out


def face_grad(const double[:, :, ::1] P, const idx_t[:, ::1] faces, const double[:, ::1] U):
    cdef Py_ssize_t m = faces.shape[0], k = U.shape[1], f, a, x, s
    cdef double p
    out = np.zeros((m, 3, k), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                for x in range(3):
                    p = P[f, a, x]
                    for s in range(k):
                        o[f, x, s] += p * U[faces[f, a], s]
    return out


def face_div(const double[:, :, ::1] Q, const idx_t[:, ::1] faces, const double[:, :, ::1] V, Py_ssize_t n):
    cdef Py_ssize_t m = faces.shape[0], k = V.shape[2], f, a, x, s, i
    cdef double q
    out = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                i = faces[f, a]
                for x in range(3):
                    q = Q[f, a, x]
                    for s in range(k):
                        o[i, s] += q * V[f, x, s]
    return out


def face_outer(const idx_t[:, ::1] faces, const double[:, ::1] Y, const double[:, :, ::1] Z):
    cdef Py_ssize_t m = faces.shape[0], k = Y.shape[1], f, a, x, s, i
    cdef double acc
    out = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                i = faces[f, a]
                for x in range(3):
                    acc = 0.0
                    for s in range(k):
                        acc += Y[i, s] * Z[f, x, s]
                    o[f, a, x] = acc
    return out


def pair_contract(const idx_t[:, ::1] faces, const double[:, ::1] Y, const double[:, ::1] Z):
    cdef Py_ssize_t m = faces.shape[0], k = Y.shape[1], f, a, b, s, i, j
    cdef double acc
    out = np.empty((m, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for f in range(m):
            for a in range(3):
                i = faces[f, a]
                for b in range(3):
                    j = faces[f, b]
                    acc = 0.0
                    for s in range(k):
                        acc += Y[i, s] * Z[j, s]
                    o[f, a, b] = acc
    return out


def normalize_field(const double[:, :, ::1] g, double floor):
    cdef Py_ssize_t m = g.shape[0], k = g.shape[2], f, x, s
    cdef double nrm, d
    out = np.empty((m, 3, k), dtype=np.float64)
    norms = np.empty((m, k), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double[:, ::1] nr = norms
    with nogil:
        for f in range(m):
            for s in range(k):
                nrm = sqrt(g[f, 0, s] * g[f, 0, s] + g[f, 1, s] * g[f, 1, s] + g[f, 2, s] * g[f, 2, s])
                nr[f, s] = nrm
                d = nrm if nrm > floor else floor
                for x in range(3):
                    o[f, x, s] = -g[f, x, s] / d
    return out, norms


def normalize_field_vjp(const double[:, :, ::1] g, const double[:, ::1] norms, const double[:, :, ::1] Vbar, double floor):
    cdef Py_ssize_t m = g.shape[0], k = g.shape[2], f, x, s
    cdef double nrm, radial, h0, h1, h2
    out = np.empty((m, 3, k), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for f in range(m):
            for s in range(k):
                nrm = norms[f, s]
                if nrm > floor:
                    h0 = g[f, 0, s] / nrm
                    h1 = g[f, 1, s] / nrm
                    h2 = g[f, 2, s] / nrm
                    radial = h0 * Vbar[f, 0, s] + h1 * Vbar[f, 1, s] + h2 * Vbar[f, 2, s]
                    o[f, 0, s] = -(Vbar[f, 0, s] - radial * h0) / nrm
                    o[f, 1, s] = -(Vbar[f, 1, s] - radial * h1) / nrm
                    o[f, 2, s] = -(Vbar[f, 2, s] - radial * h2) / nrm
                else:
                    for x in range(3):
                        o[f, x, s] = -Vbar[f, x, s] / floor
    return out


def pairwise_distances(const double[:, ::1] A, const double[:, ::1] B):
    cdef Py_ssize_t p = A.shape[0], q = B.shape[0], i, j
    cdef double d0, d1, d2
    out = np.empty((p, q), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(p):
            for j in range(q):
                d0 = A[i, 0] - B[j, 0]
                d1 = A[i, 1] - B[j, 1]
                d2 = A[i, 2] - B[j, 2]
                o[i, j] = sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    return out


def nearest_sq(const double[:, ::1] P, const double[:, ::1] Q):
    cdef Py_ssize_t p = P.shape[0], q = Q.shape[0], i, j, best_j
    cdef double d0, d1, d2, d, best
    dist = np.empty(p, dtype=np.float64)
    index = np.empty(p, dtype=np.int64)
    cdef double[::1] dv = dist
    cdef idx_t[::1] iv = index
    with nogil:
        for i in range(p):
            best = -1.0
            best_j = 0
            for j in range(q):
                d0 = P[i, 0] - Q[j, 0]
                d1 = P[i, 1] - Q[j, 1]
                d2 = P[i, 2] - Q[j, 2]
                d = d0 * d0 + d1 * d1 + d2 * d2
                if best < 0.0 or d < best:
                    best = d
                    best_j = j
            dv[i] = best
            iv[i] = best_j
    return dist, index

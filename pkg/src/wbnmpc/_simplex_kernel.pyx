# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Per-support KKT solves for the simplex least-squares enumeration.

Mirrors ``governor._support_weights_numpy``: for each support mask the
system ``[2 G_S 1; 1' 0] [w; mu] = [2 c_S; 1]`` is solved by Gaussian
elimination with partial pivoting; an exactly singular pivot triggers a
re-solve with ``ridge`` added to the diagonal of ``2 G_S``.
"""
from libc.math cimport INFINITY, fabs, isfinite

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAXN = 32


cdef int _gauss(double* K, double* r, int m) noexcept nogil:
    """Solve K x = r in place (row-major m x m); returns 1 on zero pivot."""
    cdef int i, j, k, piv
    cdef double best, t, f
    for k in range(m):
        piv = k
        best = fabs(K[k * m + k])
        for i in range(k + 1, m):
            t = fabs(K[i * m + k])
            if t > best:
                best = t
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(m):
                t = K[k * m + j]
                K[k * m + j] = K[piv * m + j]
                K[piv * m + j] = t
            t = r[k]
            r[k] = r[piv]
            r[piv] = t
        for i in range(k + 1, m):
            f = K[i * m + k] / K[k * m + k]
            if f != 0.0:
                for j in range(k, m):
                    K[i * m + j] -= f * K[k * m + j]
                r[i] -= f * r[k]
    for k in range(m - 1, -1, -1):
        t = r[k]
        for j in range(k + 1, m):
            t -= K[k * m + j] * r[j]
        r[k] = t / K[k * m + k]
    return 0


cdef void _fill(const double* G, const double* c, const int* idx, int k, int n,
                double ridge, double* K, double* r) noexcept nogil:
    cdef int i, j, m = k + 1
    for i in range(k):
        for j in range(k):
            K[i * m + j] = 2.0 * G[idx[i] * n + idx[j]]
        K[i * m + i] += ridge
        K[i * m + k] = 1.0
        K[k * m + i] = 1.0
        r[i] = 2.0 * c[idx[i]]
    K[k * m + k] = 0.0
    r[k] = 1.0


def support_weights(double[:, ::1] G, double[::1] c, cnp.uint8_t[:, ::1] masks,
                    double ridge, double[:, ::1] W):
    """Fill ``W`` (supports x n) with the restricted KKT solutions."""
    cdef Py_ssize_t s, i
    cdef int n = G.shape[0], k, ok
    cdef int idx[MAXN]
    cdef double K[(MAXN + 1) * (MAXN + 1)]
    cdef double r[MAXN + 1]
    if n > MAXN:
        raise ValueError("too many specialists for the compiled kernel")
    with nogil:
        for s in range(masks.shape[0]):
            k = 0
            for i in range(n):
                W[s, i] = 0.0
                if masks[s, i]:
                    idx[k] = <int>i
                    k += 1
            _fill(&G[0, 0], &c[0], idx, k, n, 0.0, K, r)
            ok = _gauss(K, r, k + 1) == 0
            if ok:
                for i in range(k):
                    if not isfinite(r[i]):
                        ok = 0
            if not ok:
                _fill(&G[0, 0], &c[0], idx, k, n, ridge, K, r)
                _gauss(K, r, k + 1)
            for i in range(k):
                W[s, idx[i]] = r[i]


def candidate_objectives(double[:, ::1] G, double[::1] c, double bb, double[:, ::1] W, double[::1] f):
    """Clip and renormalise each row of ``W`` in place and store its
    objective in ``f``; rows with an entry below -1e-12 get ``inf``."""
    cdef Py_ssize_t s, i, j
    cdef int n = G.shape[0]
    cdef double tot, v, gw
    with nogil:
        for s in range(W.shape[0]):
            tot = 0.0
            for i in range(n):
                if W[s, i] < -1e-12:
                    tot = -1.0
                    break
                if W[s, i] < 0.0:
                    W[s, i] = 0.0
                tot += W[s, i]
            if not tot > 0.0:
                f[s] = INFINITY
                continue
            for i in range(n):
                W[s, i] /= tot
            v = bb
            for i in range(n):
                if W[s, i] != 0.0:
                    gw = 0.0
                    for j in range(n):
                        gw += G[i, j] * W[s, j]
                    v += W[s, i] * (gw - 2.0 * c[i])
            f[s] = v

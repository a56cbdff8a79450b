# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interpreter for flat expression tapes.

Opcodes must stay in sync with ``graph.Op``.
"""
from libc.math cimport sin, cos, tan, atan, atan2, tanh, exp, sqrt, pow, floor

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF K_DIV = 1
DEF K_SQRT = 2
DEF K_POW = 3


cdef Py_ssize_t _run(const int* op, const int* a, const int* b, const double* c,
                     const double* x, const double* p, double* v,
                     Py_ssize_t n, int* kind) noexcept nogil:
    cdef Py_ssize_t i
    cdef int o
    cdef double u, w
    for i in range(n):
        o = op[i]
        if o == 5:
            v[i] = v[a[i]] * v[b[i]]
        elif o == 3:
            v[i] = v[a[i]] + v[b[i]]
        elif o == 13:
            v[i] = tanh(v[a[i]])
        elif o == 0:
            v[i] = c[i]
        elif o == 4:
            v[i] = v[a[i]] - v[b[i]]
        elif o == 6:
            w = v[b[i]]
            if w == 0.0:
                kind[0] = K_DIV
                return i
            v[i] = v[a[i]] / w
        elif o == 2:
            v[i] = x[<Py_ssize_t>c[i]]
        elif o == 1:
            v[i] = p[<Py_ssize_t>c[i]]
        elif o == 7:
            v[i] = -v[a[i]]
        elif o == 8:
            v[i] = sin(v[a[i]])
        elif o == 9:
            v[i] = cos(v[a[i]])
        elif o == 10:
            v[i] = tan(v[a[i]])
        elif o == 11:
            v[i] = atan(v[a[i]])
        elif o == 12:
            v[i] = atan2(v[a[i]], v[b[i]])
        elif o == 14:
            v[i] = exp(v[a[i]])
        elif o == 15:
            u = v[a[i]]
            if u < 0.0:
                kind[0] = K_SQRT
                return i
            v[i] = sqrt(u)
        elif o == 16:
            u = v[a[i]]
            w = c[i]
            if (u < 0.0 and w != floor(w)) or (u == 0.0 and w < 0.0):
                kind[0] = K_POW
                return i
            v[i] = pow(u, w)
        elif o == 17:
            u = v[a[i]]
            w = v[b[i]]
            v[i] = u if u <= w else w
        elif o == 18:
            u = v[a[i]]
            w = v[b[i]]
            v[i] = u if u >= w else w
        elif o == 19:
            v[i] = 1.0 if v[a[i]] >= v[b[i]] else 0.0
    return -1


def run_batch(const int[::1] op, const int[::1] a, const int[::1] b,
              const double[::1] c, const double[:, ::1] X, const double[:, ::1] P,
              const int[::1] out, double[:, ::1] Y, double[::1] work):
    """Evaluate the tape at every row of ``X``.

    ``P`` has either one row (shared) or one row per point.  Returns
    ``(-1, 0)`` on success or ``(node_index, error_kind)``.
    """
    cdef Py_ssize_t n = op.shape[0]
    cdef Py_ssize_t npts = X.shape[0]
    cdef Py_ssize_t nout = out.shape[0]
    cdef Py_ssize_t k, j, bad = -1
    cdef int kind = 0
    cdef bint shared = P.shape[0] == 1
    cdef const double* xp
    cdef const double* pp
    cdef double dummy = 0.0
    if work.shape[0] < n:
        raise ValueError("work buffer too small")
    with nogil:
        for k in range(npts):
            xp = &X[k, 0] if X.shape[1] > 0 else &dummy
            if P.shape[1] == 0:
                pp = &dummy
            elif shared:
                pp = &P[0, 0]
            else:
                pp = &P[k, 0]
            bad = _run(&op[0], &a[0], &b[0], &c[0], xp, pp, &work[0], n, &kind)
            if bad >= 0:
                break
            for j in range(nout):
                Y[k, j] = work[out[j]]
    return bad, kind

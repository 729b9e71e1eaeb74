# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled barrier kernel, loop-for-loop equivalent of ``_kernels_py``."""

import numpy as np
from libc.math cimport log, isinf, INFINITY

cdef double LN2 = 0.6931471805599453


def barrier_eval(const double[::1] y, const double[::1] coef,
                 const Py_ssize_t[::1] group, Py_ssize_t n_groups,
                 const double[::1] sl, const double[::1] su, const double[::1] sr,
                 const double[:, ::1] A, double mu,
                 double[::1] grad=None, double[:, ::1] hess=None):
    cdef Py_ssize_t n = y.shape[0], m = A.shape[0]
    cdef Py_ssize_t v, w, k
    cdef double one, value = 0.0, barrier = 0.0, akv, t, isu_v, isu_w

    R_arr = np.zeros(n_groups)
    gv_arr = np.empty(n)
    cdef double[::1] R = R_arr
    cdef double[::1] gv = gv_arr

    for v in range(n):
        one = 1.0 + coef[v] * y[v]
        if one <= 0.0 or sl[v] <= 0.0 or su[v] <= 0.0:
            return INFINITY
        barrier += log(sl[v])
        if not isinf(su[v]):
            barrier += log(su[v])
        R[group[v]] += log(one) / LN2
        gv[v] = coef[v] / (one * LN2)
    for k in range(m):
        if sr[k] <= 0.0:
            return INFINITY
        barrier += log(sr[k])
    for k in range(n_groups):
        if R[k] <= 0.0:
            return INFINITY
        value -= log(R[k])
    value -= mu * barrier
    if grad is None and hess is None:
        return value

    if grad is not None:
        for v in range(n):
            t = -gv[v] / R[group[v]] - mu / sl[v] + mu / su[v]
            for k in range(m):
                t += mu * A[k, v] / sr[k]
            grad[v] = t
    if hess is not None:
        for v in range(n):
            for w in range(v + 1):
                t = 0.0
                if group[v] == group[w]:
                    t = gv[v] * gv[w] / (R[group[v]] * R[group[v]])
                for k in range(m):
                    akv = A[k, v]
                    if akv != 0.0:
                        t += mu * akv * A[k, w] / (sr[k] * sr[k])
                hess[v, w] = t
                hess[w, v] = t
            one = 1.0 + coef[v] * y[v]
            isu_v = 1.0 / su[v]
            hess[v, v] += coef[v] * gv[v] / (one * R[group[v]]) \
                + mu * (1.0 / (sl[v] * sl[v]) + isu_v * isu_v)
    return value

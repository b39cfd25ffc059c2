# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the routines in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fmin

cnp.import_array()


cdef inline double _kern(double d2, double p, bint newton) nogil:
    if d2 <= 0.0:
        return 0.0
    if newton:
        return 1.0 / sqrt(d2)
    return pow(d2, 0.5 * p)


def pair_power(X, Y, double p):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t na = x.shape[0], nb = y.shape[0], n = x.shape[1]
    out_arr = np.empty((na, nb))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double d2, t
    cdef bint newton = p == -1.0
    with nogil:
        for i in range(na):
            for j in range(nb):
                d2 = 0.0
                for k in range(n):
                    t = x[i, k] - y[j, k]
                    d2 += t * t
                out[i, j] = _kern(d2, p, newton)
    return out_arr


def apply_power(X, m, P, double p):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(m, dtype=np.float64)
    cdef const double[:, ::1] q = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t nx = x.shape[0], nq = q.shape[0], n = x.shape[1]
    out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double d2, t, acc
    cdef bint newton = p == -1.0
    with nogil:
        for j in range(nq):
            acc = 0.0
            for i in range(nx):
                d2 = 0.0
                for k in range(n):
                    t = q[j, k] - x[i, k]
                    d2 += t * t
                acc += w[i] * _kern(d2, p, newton)
            out[j] = acc
    return out_arr


def greedy_transport(Xa, ma, Xb, mb, double cap):
    cdef const double[:, ::1] xa = np.ascontiguousarray(Xa, dtype=np.float64)
    cdef const double[:, ::1] xb = np.ascontiguousarray(Xb, dtype=np.float64)
    ra_arr = np.array(ma, dtype=np.float64)
    rb_arr = np.array(mb, dtype=np.float64)
    cdef double[::1] ra = ra_arr
    cdef double[::1] rb = rb_arr
    cdef Py_ssize_t na = xa.shape[0], nb = xb.shape[0], n = xa.shape[1]
    if na == 0 or nb == 0:
        return 0.5 * cap * (ra_arr.sum() + rb_arr.sum())
    d_arr = np.empty(na * nb)
    cdef double[::1] d = d_arr
    cdef Py_ssize_t i, j, k, s
    cdef double d2, t
    for i in range(na):
        for j in range(nb):
            d2 = 0.0
            for k in range(n):
                t = xa[i, k] - xb[j, k]
                d2 += t * t
            d[i * nb + j] = fmin(sqrt(d2), cap)
    cdef cnp.int64_t[::1] order = np.argsort(d_arr, kind="stable").astype(np.int64)
    cdef double cost = 0.0
    cdef double left = min(ra_arr.sum(), rb_arr.sum())
    cdef Py_ssize_t flat
    for s in range(order.shape[0]):
        if left <= 0.0:
            break
        flat = order[s]
        i = flat // nb
        j = flat - i * nb
        t = fmin(ra[i], rb[j])
        if t <= 0.0:
            continue
        cost += t * d[flat]
        ra[i] -= t
        rb[j] -= t
        left -= t
    return cost + 0.5 * cap * (max(ra_arr.sum(), 0.0) + max(rb_arr.sum(), 0.0))

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled log-domain Sinkhorn sweeps (twin of ``_pykernels.sinkhorn_log``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


cdef inline void _lse_rows(const double[:, ::1] lg, const double[::1] v, double[::1] out) noexcept nogil:
    cdef Py_ssize_t m = lg.shape[0], n = lg.shape[1], i, j
    cdef double mx, s, t
    for i in range(m):
        mx = -INFINITY
        for j in range(n):
            t = lg[i, j] + v[j]
            if t > mx:
                mx = t
        s = 0.0
        for j in range(n):
            s += exp(lg[i, j] + v[j] - mx)
        out[i] = mx + log(s)


cdef inline void _lse_cols(const double[:, ::1] lg, const double[::1] u, double[::1] out,
                           double[::1] mx) noexcept nogil:
    cdef Py_ssize_t m = lg.shape[0], n = lg.shape[1], i, j
    cdef double t
    for j in range(n):
        mx[j] = -INFINITY
        out[j] = 0.0
    for i in range(m):
        for j in range(n):
            t = lg[i, j] + u[i]
            if t > mx[j]:
                mx[j] = t
    for i in range(m):
        for j in range(n):
            out[j] += exp(lg[i, j] + u[i] - mx[j])
    for j in range(n):
        out[j] = mx[j] + log(out[j])


def sinkhorn_log(log_gamma, log_a, log_b, u0, v0, double tol=1e-10, long max_iter=100000):
    """Compiled twin of :func:`wotlab._kernels._pykernels.sinkhorn_log`."""
    cdef const double[:, ::1] lg = np.ascontiguousarray(log_gamma, dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(log_a, dtype=np.float64)
    cdef const double[::1] lb = np.ascontiguousarray(log_b, dtype=np.float64)
    cdef Py_ssize_t m = lg.shape[0], n = lg.shape[1], i, j
    u_a = np.array(u0, dtype=np.float64)
    v_a = np.array(v0, dtype=np.float64)
    cdef double[::1] u = u_a
    cdef double[::1] v = v_a
    cdef double[::1] L = np.zeros(m, dtype=np.float64)
    cdef double[::1] K = np.zeros(n, dtype=np.float64)
    cdef double[::1] mx = np.zeros(n, dtype=np.float64)
    cdef double err, d, dual
    cdef long it = 0
    trace = []
    while True:
        _lse_rows(lg, v, L)
        err = 0.0
        for i in range(m):
            d = fabs(exp(u[i] + L[i]) - exp(la[i]))
            if d > err:
                err = d
        if (err <= tol and it > 0) or it >= max_iter:
            break
        for i in range(m):
            u[i] = la[i] - L[i]
        _lse_cols(lg, u, K, mx)
        dual = 0.0
        for j in range(n):
            v[j] = lb[j] - K[j]
            dual += exp(lb[j]) * v[j]
        for i in range(m):
            dual += exp(la[i]) * u[i]
        trace.append(dual)
        it += 1
    return u_a, v_a, int(it), float(err), np.array(trace, dtype=np.float64)

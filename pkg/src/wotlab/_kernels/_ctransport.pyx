# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network simplex for the transportation problem.

Mirrors ``_pykernels.transport_simplex`` step for step (same initial basis,
same entering/leaving rules) so both backends return identical results.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef void _northwest(const double[::1] a, const double[::1] b, long[::1] rows,
                     long[::1] cols, double[::1] flows, double[::1] ra, double[::1] rb) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0]
    cdef Py_ssize_t i = 0, j = 0, k = 0
    cdef double f
    for i in range(m):
        ra[i] = a[i]
    for j in range(n):
        rb[j] = b[j]
    i = 0
    j = 0
    while True:
        f = ra[i] if ra[i] < rb[j] else rb[j]
        rows[k] = i
        cols[k] = j
        flows[k] = f
        k += 1
        ra[i] -= f
        rb[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1


cdef void _build_adj(Py_ssize_t m, Py_ssize_t n, Py_ssize_t nb, long[::1] rows, long[::1] cols,
                     long[::1] start, long[::1] fill, long[::1] adj) noexcept nogil:
    cdef Py_ssize_t x, k, nn = m + n
    for x in range(nn + 1):
        start[x] = 0
    for k in range(nb):
        start[rows[k] + 1] += 1
        start[m + cols[k] + 1] += 1
    for x in range(nn):
        start[x + 1] += start[x]
    for x in range(nn):
        fill[x] = start[x]
    for k in range(nb):
        adj[fill[rows[k]]] = k
        fill[rows[k]] += 1
        adj[fill[m + cols[k]]] = k
        fill[m + cols[k]] += 1


cdef bint _tree_flows(Py_ssize_t m, Py_ssize_t n, long[::1] rows, long[::1] cols,
                      const double[::1] a, const double[::1] b, double[::1] flows,
                      long[::1] start, long[::1] fill, long[::1] adj, long[::1] deg,
                      long[::1] stack, double[::1] resid, char[::1] removed) noexcept nogil:
    cdef Py_ssize_t nn = m + n, nb = m + n - 1
    cdef Py_ssize_t x, k, e, w, top = 0, done = 0, p
    _build_adj(m, n, nb, rows, cols, start, fill, adj)
    for x in range(nn):
        deg[x] = start[x + 1] - start[x]
        resid[x] = a[x] if x < m else b[x - m]
    for k in range(nb):
        removed[k] = 0
    for x in range(nn - 1, -1, -1):
        if deg[x] == 1:
            stack[top] = x
            top += 1
    while top > 0:
        top -= 1
        x = stack[top]
        if deg[x] != 1:
            continue
        e = -1
        for p in range(start[x], start[x + 1]):
            if not removed[adj[p]]:
                e = adj[p]
                break
        if e < 0:
            return False
        removed[e] = 1
        done += 1
        flows[e] = resid[x]
        w = m + cols[e] if x < m else rows[e]
        resid[w] -= resid[x]
        resid[x] = 0.0
        deg[x] -= 1
        deg[w] -= 1
        if deg[w] == 1:
            stack[top] = w
            top += 1
    return done == nb


def transport_simplex(C, a, b, basis=None, double tol=1e-12, long max_iter=100000):
    """Compiled twin of :func:`wotlab._kernels._pykernels.transport_simplex`."""
    cdef const double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0], n = c.shape[1]
    cdef Py_ssize_t nn = m + n, nb = m + n - 1
    cdef Py_ssize_t i, j, k, x, y, p, qh, qt, e, ei, ej, target, plen, leave
    cdef double scale = 0.0, rtol, best, r, theta, fmin
    cdef long key, leave_key
    cdef bint bland = False, ok
    cdef long degenerate_streak = 0, it = 0
    cdef int status = 1

    rows_a = np.zeros(nb, dtype=np.int64)
    cols_a = np.zeros(nb, dtype=np.int64)
    flows_a = np.zeros(nb, dtype=np.float64)
    cdef long[::1] rows = rows_a
    cdef long[::1] cols = cols_a
    cdef double[::1] flows = flows_a
    cdef long[::1] start = np.zeros(nn + 1, dtype=np.int64)
    cdef long[::1] fill = np.zeros(nn + 1, dtype=np.int64)
    cdef long[::1] adj = np.zeros(2 * nb + 1, dtype=np.int64)
    cdef long[::1] deg = np.zeros(nn, dtype=np.int64)
    cdef long[::1] queue = np.zeros(nn + 1, dtype=np.int64)
    cdef long[::1] parent_edge = np.zeros(nn, dtype=np.int64)
    cdef long[::1] path = np.zeros(nn, dtype=np.int64)
    cdef char[::1] seen = np.zeros(nn, dtype=np.int8)
    cdef char[::1] removed = np.zeros(nb + 1, dtype=np.int8)
    cdef double[::1] pot = np.zeros(nn, dtype=np.float64)
    cdef double[::1] resid = np.zeros(nn, dtype=np.float64)
    cdef double[::1] ra = np.zeros(m, dtype=np.float64)
    cdef double[::1] rb = np.zeros(n, dtype=np.float64)

    for i in range(m):
        for j in range(n):
            if fabs(c[i, j]) > scale:
                scale = fabs(c[i, j])
    rtol = tol * (1.0 + scale)

    ok = False
    if basis is not None:
        bas = np.asarray(basis, dtype=np.int64)
        if bas.ndim == 2 and bas.shape[0] == nb and bas.shape[1] == 2:
            for k in range(nb):
                rows[k] = bas[k, 0]
                cols[k] = bas[k, 1]
            ok = _valid_tree(m, n, rows, cols)
            if ok:
                ok = _tree_flows(m, n, rows, cols, av, bv, flows, start, fill, adj, deg,
                                 queue, resid, removed)
            if ok:
                for k in range(nb):
                    if flows[k] < -1e-14:
                        ok = False
                        break
                    if flows[k] < 0.0:
                        flows[k] = 0.0
    if not ok:
        _northwest(av, bv, rows, cols, flows, ra, rb)

    while it <= max_iter:
        _build_adj(m, n, nb, rows, cols, start, fill, adj)
        for x in range(nn):
            seen[x] = 0
            pot[x] = 0.0
        seen[0] = 1
        qh = 0
        qt = 1
        queue[0] = 0
        while qh < qt:
            x = queue[qh]
            qh += 1
            for p in range(start[x], start[x + 1]):
                k = adj[p]
                y = m + cols[k] if x < m else rows[k]
                if not seen[y]:
                    pot[y] = c[rows[k], cols[k]] - pot[x]
                    seen[y] = 1
                    queue[qt] = y
                    qt += 1
        # entering cell
        e = -1
        best = 0.0
        for i in range(m):
            for j in range(n):
                r = c[i, j] - pot[i] - pot[m + j]
                if bland:
                    if r < -rtol:
                        e = i * n + j
                        break
                elif e < 0 or r < best:
                    best = r
                    e = i * n + j
            if bland and e >= 0:
                break
        if bland:
            if e < 0:
                status = 0
                break
        elif best >= -rtol:
            status = 0
            break
        if it == max_iter:
            break
        it += 1
        ei = e // n
        ej = e % n

        for x in range(nn):
            seen[x] = 0
            parent_edge[x] = -1
        seen[ei] = 1
        qh = 0
        qt = 1
        queue[0] = ei
        target = m + ej
        while qh < qt:
            x = queue[qh]
            qh += 1
            if x == target:
                break
            for p in range(start[x], start[x + 1]):
                k = adj[p]
                y = m + cols[k] if x < m else rows[k]
                if not seen[y]:
                    seen[y] = 1
                    parent_edge[y] = k
                    queue[qt] = y
                    qt += 1
        plen = 0
        x = target
        while x != ei:
            k = parent_edge[x]
            path[plen] = k
            plen += 1
            x = rows[k] if x >= m else m + cols[k]

        theta = flows[path[0]]
        for p in range(0, plen, 2):
            if flows[path[p]] < theta:
                theta = flows[path[p]]
        leave = -1
        leave_key = 0
        for p in range(0, plen, 2):
            k = path[p]
            if flows[k] <= theta + 1e-15:
                key = rows[k] * n + cols[k]
                if leave < 0 or (bland and key < leave_key):
                    leave = k
                    leave_key = key
        for p in range(plen):
            k = path[p]
            if p % 2 == 0:
                fmin = flows[k] - theta
                flows[k] = fmin if fmin > 0.0 else 0.0
            else:
                flows[k] += theta
        flows[leave] = theta
        rows[leave] = ei
        cols[leave] = ej
        if theta <= 1e-15:
            degenerate_streak += 1
            if degenerate_streak > 2 * (m + n):
                bland = True
        else:
            degenerate_streak = 0

    plan = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] pl = plan
    for k in range(nb):
        pl[rows[k], cols[k]] += flows[k]
    u = np.asarray(pot[:m]).copy()
    v = np.asarray(pot[m:]).copy()
    basis_out = np.stack([rows_a, cols_a], axis=1).copy()
    return plan, u, v, basis_out, int(it), int(status)


cdef bint _valid_tree(Py_ssize_t m, Py_ssize_t n, long[::1] rows, long[::1] cols):
    cdef Py_ssize_t nb = m + n - 1, k, ri, rj, x
    parent = np.arange(m + n, dtype=np.int64)
    cdef long[::1] par = parent
    for k in range(nb):
        if rows[k] < 0 or rows[k] >= m or cols[k] < 0 or cols[k] >= n:
            return False
        ri = rows[k]
        while par[ri] != ri:
            par[ri] = par[par[ri]]
            ri = par[ri]
        rj = m + cols[k]
        while par[rj] != rj:
            par[rj] = par[par[rj]]
            rj = par[rj]
        if ri == rj:
            return False
        par[ri] = rj
    return True

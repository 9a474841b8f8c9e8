"""Pure-Python reference kernels.

Same algorithms, same pivoting rules and same outputs as the compiled
versions in ``_ctransport.pyx`` / ``_csinkhorn.pyx``; used when the
extension is not built or ``WOTLAB_PURE_PYTHON`` is set.
"""

from __future__ import annotations

from collections import deque

import numpy as np

OPTIMAL = 0
MAX_ITER = 1


def _northwest(a, b):
    m, n = len(a), len(b)
    ra, rb = list(a), list(b)
    rows, cols, flows = [], [], []
    i = j = 0
    while True:
        f = min(ra[i], rb[j])
        rows.append(i)
        cols.append(j)
        flows.append(f)
        ra[i] -= f
        rb[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return rows, cols, flows


def _tree_flows(rows, cols, a, b):
    """Flows on a spanning tree that meet the marginals (leaf elimination)."""
    m, n = len(a), len(b)
    nn = m + n
    adj = [[] for _ in range(nn)]
    for k, (i, j) in enumerate(zip(rows, cols)):
        adj[i].append(k)
        adj[m + j].append(k)
    deg = [len(x) for x in adj]
    resid = list(a) + list(b)
    removed = [False] * len(rows)
    flows = [0.0] * len(rows)
    stack = [v for v in range(nn) if deg[v] == 1]
    done = 0
    while stack:
        v = stack.pop()
        if deg[v] != 1:
            continue
        k = next(e for e in adj[v] if not removed[e])
        removed[k] = True
        done += 1
        flows[k] = resid[v]
        w = m + cols[k] if v < m else rows[k]
        resid[w] -= resid[v]
        resid[v] = 0.0
        deg[v] -= 1
        deg[w] -= 1
        if deg[w] == 1:
            stack.append(w)
    if done != len(rows):
        return None
    return flows


def _is_spanning_tree(rows, cols, m, n):
    if len(rows) != m + n - 1:
        return False
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(rows, cols):
        if not (0 <= i < m and 0 <= j < n):
            return False
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def transport_simplex(C, a, b, basis=None, tol=1e-12, max_iter=100000):
    """Exact min-cost transportation by the primal network simplex.

    Returns ``(plan, u, v, basis, iterations, status)`` with
    ``u_i + v_j = C_ij`` on the ``m + n - 1`` basic cells and
    ``C_ij - u_i - v_j >= -tol * (1 + max|C|)`` everywhere on success.
    """
    C = np.ascontiguousarray(C, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = C.shape
    scale = 1.0 + float(np.max(np.abs(C))) if C.size else 1.0
    rtol = tol * scale

    rows = cols = flows = None
    if basis is not None:
        br = [int(x) for x in basis[:, 0]]
        bc = [int(x) for x in basis[:, 1]]
        if _is_spanning_tree(br, bc, m, n):
            fl = _tree_flows(br, bc, a, b)
            if fl is not None and min(fl) >= -1e-14:
                rows, cols, flows = br, bc, [max(f, 0.0) for f in fl]
    if rows is None:
        rows, cols, flows = _northwest(a, b)

    nb = m + n - 1
    bland = False
    degenerate_streak = 0
    it = 0
    status = MAX_ITER
    u = np.zeros(m)
    v = np.zeros(n)
    while it <= max_iter:
        # potentials by BFS from row 0
        adj = [[] for _ in range(m + n)]
        for k in range(nb):
            adj[rows[k]].append(k)
            adj[m + cols[k]].append(k)
        pot = [0.0] * (m + n)
        seen = [False] * (m + n)
        seen[0] = True
        queue = deque([0])
        while queue:
            x = queue.popleft()
            for k in adj[x]:
                if x < m:
                    y = m + cols[k]
                    if not seen[y]:
                        pot[y] = C[rows[k], cols[k]] - pot[x]
                        seen[y] = True
                        queue.append(y)
                else:
                    y = rows[k]
                    if not seen[y]:
                        pot[y] = C[rows[k], cols[k]] - pot[x]
                        seen[y] = True
                        queue.append(y)
        u = np.array(pot[:m])
        v = np.array(pot[m:])
        red = C - u[:, None] - v[None, :]
        if bland:
            cand = np.flatnonzero(red.ravel() < -rtol)
            if cand.size == 0:
                status = OPTIMAL
                break
            e = int(cand[0])
        else:
            e = int(np.argmin(red))
            if red.flat[e] >= -rtol:
                status = OPTIMAL
                break
        if it == max_iter:
            break
        it += 1
        ei, ej = divmod(e, n)

        # tree path from column node m+ej back to row node ei
        parent_edge = [-1] * (m + n)
        seen = [False] * (m + n)
        seen[ei] = True
        queue = deque([ei])
        target = m + ej
        while queue:
            x = queue.popleft()
            if x == target:
                break
            for k in adj[x]:
                y = m + cols[k] if x < m else rows[k]
                if not seen[y]:
                    seen[y] = True
                    parent_edge[y] = k
                    queue.append(y)
        path = []
        x = target
        while x != ei:
            k = parent_edge[x]
            path.append(k)
            x = rows[k] if x >= m else m + cols[k]

        # odd positions (0, 2, ...) lose mass
        theta = min(flows[path[p]] for p in range(0, len(path), 2))
        leave = -1
        leave_key = None
        for p in range(0, len(path), 2):
            k = path[p]
            if flows[k] <= theta + 1e-15:
                key = rows[k] * n + cols[k]
                if leave < 0 or (bland and key < leave_key):
                    leave, leave_key = k, key
        for p, k in enumerate(path):
            if p % 2 == 0:
                flows[k] = max(flows[k] - theta, 0.0)
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

    plan = np.zeros((m, n))
    for k in range(nb):
        plan[rows[k], cols[k]] += flows[k]
    basis_out = np.array([rows, cols], dtype=np.int64).T.copy()
    return plan, u, v, basis_out, it, status


def _lse_rows(M):
    mx = M.max(axis=1)
    return mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))


def sinkhorn_log(log_gamma, log_a, log_b, u0, v0, tol=1e-10, max_iter=100000):
    """Log-domain alternating marginal fitting.

    The coupling is ``exp(log_gamma + u[:, None] + v[None, :])``.  Every
    sweep fits the rows, then the columns; after at least one sweep,
    iteration stops once the row error of the current state is at most
    ``tol`` (columns are exact after each sweep).  Returns
    ``(u, v, iterations, err, dual_trace)`` where the dual trace holds
    ``<a, u> + <b, v>`` after every column fit.
    """
    lg = np.asarray(log_gamma, dtype=float)
    la = np.asarray(log_a, dtype=float)
    lb = np.asarray(log_b, dtype=float)
    a = np.exp(la)
    b = np.exp(lb)
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    trace = []
    err = np.inf
    it = 0
    while True:
        L = _lse_rows(lg + v[None, :])
        err = float(np.max(np.abs(np.exp(u + L) - a)))
        if (err <= tol and it > 0) or it >= max_iter:
            break
        u = la - L
        v = lb - _lse_rows((lg + u[:, None]).T)
        trace.append(float(a @ u + b @ v))
        it += 1
    return u, v, it, err, np.array(trace)

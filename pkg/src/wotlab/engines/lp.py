"""Dense two-phase primal simplex with duals and Farkas rays.

The problem is ``min c.x`` subject to ``A_i x (<=, =, >=) b_i`` and
``lb <= x <= ub``.  Internally it is brought to the standard form
``A' x' = b', x' >= 0, b' >= 0`` (bound shifts, free-variable splitting,
slack/surplus columns, sign flips) and solved with an explicit tableau
that is rebuilt from the basis every few dozen pivots.  The final basis is
re-solved with a dense factorization, so primal values and duals are
accurate to roughly machine precision times the condition number.

Sign convention for duals: ``y_i >= 0`` on ``>=`` rows, ``y_i <= 0`` on
``<=`` rows, free on ``=`` rows, so that ``c - A^T y`` minus the bound
multipliers is zero at an optimum.  A Farkas ray obeys the same sign
pattern with ``y^T A <= 0`` on nonnegative columns and ``y^T b > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

MAX_VARIABLES = 20000
_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-10
_SENSES = {"<=": -1, "=": 0, "==": 0, ">=": 1, "le": -1, "eq": 0, "ge": 1}


class CyclingError(RuntimeError):
    """Raised when a non-Bland pivot rule exceeds its degenerate-pivot budget."""


class LPSizeError(ValueError):
    """Raised for programs above the dense-size cap."""


@dataclass(frozen=True)
class LinearProgram:
    """``min objective.x`` s.t. ``A x (sense) rhs``, ``lower <= x <= upper``.

    ``senses`` holds one of ``"<="``, ``"="``, ``">="`` per row.  ``lower``
    defaults to zero and ``upper`` to ``+inf``; ``-inf`` lower bounds make
    a variable free.
    """

    objective: np.ndarray
    A: np.ndarray
    rhs: np.ndarray
    senses: tuple
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.shape[0]
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, n))
        b = np.asarray(self.rhs, dtype=float).ravel()
        if A.ndim != 2 or A.shape[1] != n or A.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent LP dimensions: c {n}, A {A.shape}, b {b.shape}")
        senses = tuple(self.senses)
        if len(senses) != b.shape[0] or any(s not in _SENSES for s in senses):
            raise ValueError("need one sense in {'<=', '=', '>='} per row")
        lo = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        up = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != (n,) or up.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        for arr, name in ((c, "objective"), (A, "A"), (b, "rhs")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite coefficient in {name}")
        if np.any(lo == np.inf) or np.any(up == -np.inf) or np.any(lo > up):
            raise ValueError("empty variable bounds")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]


@dataclass
class LPSolution:
    """Result of :func:`simplex_solve`.

    ``dual`` has one entry per constraint row; ``bound_dual`` one entry per
    variable (multiplier of the active finite bound, zero otherwise).
    ``ray`` is set on infeasible programs.
    """

    status: str
    x: np.ndarray | None = None
    dual: np.ndarray | None = None
    objective: float = np.nan
    dual_objective: float = np.nan
    bound_dual: np.ndarray | None = None
    iterations: int = 0
    ray: "FarkasRay | None" = None
    info: dict = field(default_factory=dict)


@dataclass
class FarkasRay:
    """Infeasibility proof.

    ``y_std`` certifies the standardized system (``y^T A_std <= 0``,
    ``y^T b_std > 0``); ``y_rows`` is the same multiplier expressed on the
    original constraint rows (sign pattern as for duals) and ``y_upper``
    on finite upper-bound rows.
    """

    y_std: np.ndarray
    A_std: np.ndarray
    b_std: np.ndarray
    y_rows: np.ndarray
    y_upper: np.ndarray
    margin: float

    def check(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.y_std @ self.A_std <= tol) and self.y_std @ self.b_std > tol)


class _Standard:
    """Standard-form image of a :class:`LinearProgram` and the maps back."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        cols = []  # (orig var, sign) per structural column
        shift = np.zeros(n)
        ub_rows = []  # (std column, width)
        for j in range(n):
            lo, up = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                shift[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(up):
                    ub_rows.append((len(cols) - 1, up - lo, j))
            elif np.isfinite(up):
                shift[j] = up
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ns = len(cols)
        T = np.zeros((n, ns))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s
        A = lp.A @ T
        b = lp.rhs - lp.A @ shift
        sense = np.array([_SENSES[s] for s in lp.senses], dtype=int)
        if ub_rows:
            U = np.zeros((len(ub_rows), ns))
            for r, (k, _, _) in enumerate(ub_rows):
                U[r, k] = 1.0
            A = np.vstack([A, U])
            b = np.concatenate([b, [w for _, w, _ in ub_rows]])
            sense = np.concatenate([sense, -np.ones(len(ub_rows), dtype=int)])
        k_rows = A.shape[0]
        slack_idx = np.flatnonzero(sense != 0)
        S = np.zeros((k_rows, slack_idx.size))
        for t, i in enumerate(slack_idx):
            S[i, t] = -float(sense[i])  # <= gets +s, >= gets -s
        A = np.hstack([A, S])
        flip = np.where(b < 0, -1.0, 1.0)
        self.A = A * flip[:, None]
        self.b = b * flip
        self.c = np.concatenate([T.T @ lp.objective, np.zeros(slack_idx.size)])
        self.const = float(lp.objective @ shift)
        self.T = T
        self.shift = shift
        self.flip = flip
        self.n_struct = ns
        self.n_orig_rows = lp.n_rows
        self.ub_rows = ub_rows
        self.slack_idx = slack_idx
        self.sense = sense

    def x_orig(self, xs: np.ndarray) -> np.ndarray:
        return self.shift + self.T @ xs[: self.n_struct]

    def rows_orig(self, ys: np.ndarray):
        y = ys * self.flip
        return y[: self.n_orig_rows], y[self.n_orig_rows:]


class _Tableau:
    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = list(basis)
        self.rebuild()

    def rebuild(self):
        B = self.A[:, self.basis]
        M = np.linalg.solve(B, np.hstack([self.A, self.b[:, None]]))
        self.T = M[:, :-1]
        self.rhs = M[:, -1]
        self.rhs[self.rhs < 0] = np.where(self.rhs[self.rhs < 0] > -1e-9, 0.0, self.rhs[self.rhs < 0])

    def pivot(self, r, e):
        piv = self.T[r, e]
        self.T[r] /= piv
        self.rhs[r] /= piv
        col = self.T[:, e].copy()
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.rhs -= col * self.rhs[r]
        self.basis[r] = e


def _ratio_test(tab, e, use_bland):
    """Leaving row for entering column ``e``, or ``None`` if the column is unbounded.

    Harris two-pass test: relax the bounds by a feasibility tolerance, then
    take a large pivot among the rows that block within the relaxed step.
    """
    col = tab.T[:, e]
    pos = col > _PIVOT_TOL * (1.0 + np.abs(col).max())
    if not pos.any():
        return None
    rhs = np.maximum(tab.rhs, 0.0)
    ratios = np.full(col.shape, np.inf)
    ratios[pos] = rhs[pos] / col[pos]
    relaxed = np.min((rhs[pos] + _FEAS_TOL) / col[pos])
    cand = np.flatnonzero(ratios <= relaxed)
    cand = cand[col[cand] >= 0.1 * col[cand].max()]
    if use_bland:
        return int(cand[np.argmin(np.asarray(tab.basis)[cand])])
    return int(cand[np.argmax(col[cand])])


def _run_simplex(tab, cost, allowed, rule, max_iter, tol, cycle_budget, refactor_every=50):
    """Primal simplex on ``tab``; returns ``"optimal"``, ``"unbounded"``.

    ``allowed`` masks the columns that may enter.
    """
    it = 0
    degenerate = 0
    use_bland = rule == "bland"
    while True:
        cb = cost[tab.basis]
        d = cost - cb @ tab.T
        d[~allowed] = 0.0
        d[tab.basis] = 0.0
        scale = 1.0 + np.max(np.abs(cost))
        neg = d < -tol * scale
        if not neg.any():
            return "optimal", it
        if it >= max_iter:
            raise CyclingError(f"simplex exceeded {max_iter} pivots")
        if use_bland:
            e = int(np.argmax(neg))
        else:
            e = int(np.argmin(d))
        r = _ratio_test(tab, e, use_bland)
        if r is not None and tab.T[r, e] < 1e-6 * np.abs(tab.T[:, e]).max() and it % refactor_every:
            # small pivot: refresh the tableau before trusting it
            tab.rebuild()
            r = _ratio_test(tab, e, use_bland)
        if r is None:
            return "unbounded", it
        rmin = max(tab.rhs[r], 0.0) / tab.T[r, e]
        tab.pivot(r, e)
        it += 1
        if rmin <= 1e-12:
            degenerate += 1
            if rule == "hybrid" and degenerate > 50:
                use_bland = True
            if rule == "dantzig" and degenerate > cycle_budget:
                raise CyclingError("degenerate pivot budget exhausted without Bland's rule")
        else:
            degenerate = 0
            if rule == "hybrid":
                use_bland = False
        if it % refactor_every == 0:
            tab.rebuild()


def simplex_solve(
    lp: LinearProgram,
    rule: str = "bland",
    max_iter: int = 200000,
    tol: float = 1e-10,
    max_vars: int = MAX_VARIABLES,
    cycle_budget: int = 5000,
) -> LPSolution:
    """Solve a dense LP by the two-phase primal simplex method.

    Parameters
    ----------
    lp : LinearProgram
    rule : {"bland", "hybrid", "dantzig"}
        Entering-variable rule.  ``"bland"`` never cycles.  ``"hybrid"``
        uses Dantzig's rule and falls back to Bland's after a run of
        degenerate pivots.  ``"dantzig"`` raises :class:`CyclingError`
        once ``cycle_budget`` consecutive degenerate pivots occur.
    max_vars : int
        Size cap on the number of standardized columns.

    Returns
    -------
    LPSolution
    """
    if rule not in ("bland", "hybrid", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    if lp.n_vars > max_vars:
        raise LPSizeError(f"{lp.n_vars} variables exceed the cap of {max_vars}")
    st = _Standard(lp)
    A, b = st.A, st.b
    k, N = A.shape
    if N > max_vars + k:
        raise LPSizeError(f"{N} standardized columns exceed the cap")
    if k == 0:
        # only sign constraints: optimum at x'=0 unless some cost is negative
        if np.any(st.c < -tol):
            return LPSolution(UNBOUNDED, iterations=0)
        x = st.x_orig(np.zeros(N))
        val = float(lp.objective @ x)
        return LPSolution(OPTIMAL, x, np.zeros(0), val, val, np.zeros(lp.n_vars), 0)

    # initial basis: slack columns that are +e_i, artificials elsewhere
    basis = [-1] * k
    for t, i in enumerate(st.slack_idx):
        col = N - st.slack_idx.size + t
        if A[i, col] > 0:
            basis[i] = col
    need = [i for i in range(k) if basis[i] < 0]
    Aa = np.hstack([A, np.zeros((k, len(need)))])
    for t, i in enumerate(need):
        Aa[i, N + t] = 1.0
        basis[i] = N + t
    n_all = N + len(need)
    art = np.zeros(n_all, dtype=bool)
    art[N:] = True

    tab = _Tableau(Aa, b, basis)
    it1 = 0
    if need:
        c1 = art.astype(float)
        _, it1 = _run_simplex(tab, c1, np.ones(n_all, dtype=bool), rule, max_iter, tol, cycle_budget)
        tab.rebuild()
        phase1 = float(tab.rhs[art[tab.basis]].sum())
        if phase1 > 1e-9 * (1.0 + np.max(np.abs(b))):
            B = Aa[:, tab.basis]
            y = np.linalg.solve(B.T, c1[tab.basis])
            ray = _make_ray(st, y, A, b)
            return LPSolution(INFEASIBLE, iterations=it1, ray=ray, info={"phase1": phase1})
        # drive remaining artificials out; drop redundant rows
        keep = np.ones(k, dtype=bool)
        for r in range(k):
            if art[tab.basis[r]]:
                cand = np.flatnonzero((~art) & (np.abs(tab.T[r]) > 1e-9))
                cand = [c for c in cand if c not in tab.basis]
                if cand:
                    tab.pivot(r, int(cand[np.argmax(np.abs(tab.T[r, cand]))]))
                else:
                    # tableau row r is a vanishing combination of the rows with unit
                    # weight on the artificial's own row, which is therefore redundant
                    keep[need[tab.basis[r] - N]] = False
        if not keep.all():
            rows = np.flatnonzero(keep)
            basis2 = [c for c in tab.basis if not art[c]]
            tab = _Tableau(Aa[rows], b[rows], basis2)
        else:
            tab.rebuild()
        row_map = np.flatnonzero(keep)
    else:
        row_map = np.arange(k)

    cost = np.concatenate([st.c, np.zeros(len(need))])
    allowed = ~art
    status, it2 = _run_simplex(tab, cost, allowed, rule, max_iter, tol, cycle_budget)
    iters = it1 + it2
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=iters)

    tab.rebuild()
    B = tab.A[:, tab.basis]
    xs = np.zeros(n_all)
    xs[tab.basis] = np.linalg.solve(B, tab.b)
    xs[(xs < 0) & (xs > -1e-9)] = 0.0
    ys_sub = np.linalg.solve(B.T, cost[tab.basis])
    ys = np.zeros(k)
    ys[row_map] = ys_sub
    x = st.x_orig(xs[:N])
    y_rows, y_ub = st.rows_orig(ys)
    bound_dual = np.zeros(lp.n_vars)
    # reduced costs of structural columns are multipliers of active lower bounds
    red = st.c - ys @ A
    for kcol, (j, s) in enumerate(_columns(st)):
        if np.isfinite(lp.lower[j]) and s > 0:
            bound_dual[j] += red[kcol]
        elif s < 0 and not np.isfinite(lp.lower[j]) and np.isfinite(lp.upper[j]):
            bound_dual[j] -= red[kcol]
    for r, (_, _, j) in enumerate(st.ub_rows):
        bound_dual[j] += y_ub[r]
    obj = float(lp.objective @ x)
    dual_obj = float(ys @ b + st.const)
    return LPSolution(
        OPTIMAL, x, y_rows, obj, dual_obj, bound_dual, iters,
        info={"basis": list(tab.basis), "min_reduced_cost": float(red.min()) if red.size else 0.0},
    )


def _columns(st: _Standard):
    out = []
    for k in range(st.n_struct):
        j = int(np.flatnonzero(st.T[:, k])[0])
        out.append((j, float(st.T[j, k])))
    return out


def _make_ray(st: _Standard, y, A, b) -> FarkasRay:
    y = np.asarray(y, dtype=float)
    scale = np.max(np.abs(y))
    if scale > 0:
        y = y / scale
    y_rows, y_ub = st.rows_orig(y)
    return FarkasRay(y, A, b, y_rows, y_ub, float(y @ b))


def farkas_certificate(lp: LinearProgram, **kwargs) -> FarkasRay:
    """Return a verified Farkas ray for an infeasible program.

    Raises ``ValueError`` if the program is feasible or the ray fails the
    numeric check at 1e-9.
    """
    sol = simplex_solve(lp, **kwargs)
    if sol.status != INFEASIBLE:
        raise ValueError(f"program is not infeasible (status {sol.status})")
    ray = sol.ray
    if not ray.check(1e-9):
        raise ValueError("Farkas ray failed verification")
    return ray

"""Four equivalent formulations of the multiple-good monopoly value, and the KR dual.

For convex ``theta`` the following coincide:

i)   weak transport with ``C(x, p) = theta_hat(x - bar p)``, where
     ``theta_hat(u) = inf_{z >= u} theta(z)``;
ii)  ``inf`` over ``nu~ <=icx nu`` of classical transport ``(mu, nu~)`` with cost ``theta(x - y)``;
iii) as ii) with ``mu`` also relaxed to any ``mu~ >=icx mu``;
iv)  ``sup`` over increasing convex ``phi`` of ``-nu(phi) + mu(R_theta phi)``, where
     ``R_theta phi(x) = inf_{y <= z} phi(z) + theta(x - y)``.

Form i works in any dimension.  Forms ii-iv are linear programs on a
one-dimensional grid holding the free intermediate measures and the values
of ``phi``.  The grid biases ii) and iii) upward and iv) downward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import MonopolyIcx, Theta, make_theta
from .engines.fw import FWOptions
from .engines.lp import OPTIMAL, LinearProgram, simplex_solve
from .measures import DiscreteMeasure

GRID_TOL = 1e-12
CONVEXITY_TOL = 1e-10
HAT_STEPS = 10_000
LP_RULE = "hybrid"
TANGENT_STEP = 1e-4


class MonopolyLPError(RuntimeError):
    """A grid LP did not reach an optimal basis."""


def hat_theta(theta, u, diameter: float = 10.0, with_bound: bool = False):
    """``inf_{z >= u} theta(z)`` (componentwise order).

    Norms have closed forms: the norm of ``max(u, 0)``.  For a custom
    one-dimensional convex ``theta`` the infimum is taken over the grid
    ``z = u + k * diameter / 10^4``, ``k = 0..10^4``; with ``with_bound`` the
    pair ``(value, bound)`` is returned, ``bound`` an estimate of the
    discretization error from the slopes at the interval ends.
    """
    th = make_theta(theta)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if th.is_norm:
        val = th.hat(u)
        return (val, 0.0) if with_bound else val
    if u.size != 1:
        raise ValueError("custom theta is one-dimensional")
    h = diameter / HAT_STEPS
    zs = u[0] + h * np.arange(HAT_STEPS + 1)
    vals = np.array([th.fn(z) for z in zs])
    val = float(vals.min())
    lip = max(abs(vals[1] - vals[0]), abs(vals[-1] - vals[-2])) / h
    return (val, float(lip * h)) if with_bound else val


@dataclass
class MonopolyProblem:
    """Measures, convex ``theta`` and a sorted grid containing both supports (1D for forms ii-iv)."""

    theta: Theta
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    grid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = make_theta(self.theta)
        if self.mu.dim != self.nu.dim:
            raise ValueError("measures must have the same dimension")
        if self.grid is None:
            if self.mu.dim == 1:
                self.grid = default_grid(self.mu, self.nu)
        else:
            g = np.asarray(self.grid, dtype=float).ravel()
            if np.any(np.diff(g) <= 0):
                raise ValueError("grid must be strictly increasing")
            self.grid = g
        if self.grid is not None:
            for m in (self.mu, self.nu):
                if not all(np.min(np.abs(self.grid - p)) <= GRID_TOL for p in m.points[:, 0]):
                    raise ValueError("grid must contain the supports of mu and nu")
            if self.theta.name == "custom":
                span = self.grid[-1] - self.grid[0]
                z = np.linspace(-span, span, 401)
                v = np.array([self.theta.fn(t) for t in z])
                if np.min(v[:-2] - 2 * v[1:-1] + v[2:]) < -CONVEXITY_TOL:
                    raise ValueError("theta is not convex on the grid range")

    @property
    def is_1d(self) -> bool:
        return self.mu.dim == 1

    def theta_1d(self, z) -> float:
        return self.theta(np.array([z]))

    def refined(self) -> "MonopolyProblem":
        """Same problem on the grid with all midpoints added."""
        g = self.grid
        fine = np.sort(np.concatenate([g, 0.5 * (g[1:] + g[:-1])]))
        return MonopolyProblem(self.theta, self.mu, self.nu, fine)


def default_grid(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Union of the supports plus all midpoints of consecutive union points."""
    u = np.unique(np.concatenate([mu.points[:, 0], nu.points[:, 0]]))
    return np.sort(np.concatenate([u, 0.5 * (u[1:] + u[:-1])]))


def _require_1d(prob: MonopolyProblem):
    if not prob.is_1d:
        raise ValueError("forms ii-iv are implemented on one-dimensional grids only")


def _grid_index(grid, pts) -> np.ndarray:
    return np.array([int(np.argmin(np.abs(grid - p))) for p in pts])


def _solve(lp: LinearProgram, what: str):
    sol = simplex_solve(lp, rule=LP_RULE)
    if sol.status != OPTIMAL:
        raise MonopolyLPError(f"{what} LP is {sol.status}")
    return sol


class _Vars:
    """Column layout of a grid LP: named blocks of consecutive variables."""

    def __init__(self):
        self.n = 0
        self.blocks = {}

    def add(self, name, shape):
        size = int(np.prod(shape))
        self.blocks[name] = (self.n, shape)
        self.n += size

    def idx(self, name, *k) -> int:
        start, shape = self.blocks[name]
        return start + int(np.ravel_multi_index(k, shape))


def solve_form_i(prob: MonopolyProblem, opts: FWOptions | None = None) -> float:
    """Weak transport value with the monopoly cost, any dimension."""
    from .wot import solve_primal

    model = MonopolyIcx(prob.mu.points, prob.nu.points, prob.theta)
    sol = solve_primal(model, prob.mu, prob.nu, opts or FWOptions(rel_tol=1e-10), skip_property_check=True)
    return sol.value


def solve_form_ii(prob: MonopolyProblem) -> float:
    """``inf_{nu~ <=icx nu} OT_theta(mu, nu~)`` with ``nu~`` on the grid."""
    _require_1d(prob)
    x, y, g = prob.mu.points[:, 0], prob.nu.points[:, 0], prob.grid
    m, n, G = x.size, y.size, g.size
    v = _Vars()
    v.add("pi", (m, G))
    v.add("sigma", (G, n))
    rows, rhs, senses = [], [], []

    def row():
        r = np.zeros(v.n)
        rows.append(r)
        return r

    for i in range(m):
        r = row()
        for k in range(G):
            r[v.idx("pi", i, k)] = 1.0
        rhs.append(prob.mu.weights[i]); senses.append("=")
    for k in range(G):
        r = row()
        for i in range(m):
            r[v.idx("pi", i, k)] = 1.0
        for j in range(n):
            r[v.idx("sigma", k, j)] = -1.0
        rhs.append(0.0); senses.append("=")
    for j in range(n):
        r = row()
        for k in range(G):
            r[v.idx("sigma", k, j)] = 1.0
        rhs.append(prob.nu.weights[j]); senses.append("=")
    for k in range(G):
        r = row()
        for j in range(n):
            r[v.idx("sigma", k, j)] = y[j] - g[k]
        rhs.append(0.0); senses.append(">=")
    c = np.zeros(v.n)
    for i in range(m):
        for k in range(G):
            c[v.idx("pi", i, k)] = prob.theta_1d(x[i] - g[k])
    return _solve(LinearProgram(c, np.array(rows), rhs, senses), "form ii").objective


def solve_form_iii(prob: MonopolyProblem) -> float:
    """``inf`` over ``mu <=icx mu~`` and ``nu~ <=icx nu`` of ``OT_theta(mu~, nu~)``, both on the grid."""
    _require_1d(prob)
    x, y, g = prob.mu.points[:, 0], prob.nu.points[:, 0], prob.grid
    m, n, G = x.size, y.size, g.size
    v = _Vars()
    v.add("rho", (m, G))
    v.add("tau", (G, G))
    v.add("sigma", (G, n))
    rows, rhs, senses = [], [], []

    def row():
        r = np.zeros(v.n)
        rows.append(r)
        return r

    for i in range(m):
        r = row()
        for k in range(G):
            r[v.idx("rho", i, k)] = 1.0
        rhs.append(prob.mu.weights[i]); senses.append("=")
        r = row()
        for k in range(G):
            r[v.idx("rho", i, k)] = g[k] - x[i]
        rhs.append(0.0); senses.append(">=")
    for k in range(G):
        r = row()
        for i in range(m):
            r[v.idx("rho", i, k)] = 1.0
        for l in range(G):
            r[v.idx("tau", k, l)] = -1.0
        rhs.append(0.0); senses.append("=")
    for l in range(G):
        r = row()
        for k in range(G):
            r[v.idx("tau", k, l)] = 1.0
        for j in range(n):
            r[v.idx("sigma", l, j)] = -1.0
        rhs.append(0.0); senses.append("=")
        r = row()
        for j in range(n):
            r[v.idx("sigma", l, j)] = y[j] - g[l]
        rhs.append(0.0); senses.append(">=")
    for j in range(n):
        r = row()
        for l in range(G):
            r[v.idx("sigma", l, j)] = 1.0
        rhs.append(prob.nu.weights[j]); senses.append("=")
    c = np.zeros(v.n)
    for k in range(G):
        for l in range(G):
            c[v.idx("tau", k, l)] = prob.theta_1d(g[k] - g[l])
    return _solve(LinearProgram(c, np.array(rows), rhs, senses), "form iii").objective


def _phi_constraints(v: _Vars, g, rows, rhs, senses, lipschitz: bool):
    G = g.size

    def row():
        r = np.zeros(v.n)
        rows.append(r)
        return r

    # phi(g_0) = 0 pins the additive constant
    r = row()
    r[v.idx("phi", 0)] = 1.0
    rhs.append(0.0); senses.append("=")
    for k in range(G - 1):
        r = row()
        r[v.idx("phi", k + 1)] = 1.0
        r[v.idx("phi", k)] = -1.0
        rhs.append(0.0); senses.append(">=")
        if lipschitz:
            r = row()
            r[v.idx("phi", k + 1)] = 1.0
            r[v.idx("phi", k)] = -1.0
            rhs.append(g[k + 1] - g[k]); senses.append("<=")
    for k in range(1, G - 1):
        hl, hr = g[k] - g[k - 1], g[k + 1] - g[k]
        r = row()
        r[v.idx("phi", k + 1)] = 1.0 / hr
        r[v.idx("phi", k)] = -1.0 / hr - 1.0 / hl
        r[v.idx("phi", k - 1)] = 1.0 / hl
        rhs.append(0.0); senses.append(">=")


def _tangent_cut(prob: MonopolyProblem, x: float, a: float, b: float):
    """Crossing ``(t, value)`` of lower tangents to ``psi(y) = theta(x - y)`` at ``a`` and ``b``.

    A left chord at ``a`` and a right chord at ``b`` bound the one-sided
    derivatives from the correct side, so both lines stay below ``psi`` on
    ``[a, b]``.  Returns None when the lines do not cross inside the cell.
    """
    psi = lambda y: prob.theta_1d(x - y)
    h = b - a
    delta = TANGENT_STEP * h
    pa, pb = psi(a), psi(b)
    sa = (pa - psi(a - delta)) / delta
    sb = (psi(b + delta) - pb) / delta
    if sb - sa <= 1e-12 * (1.0 + abs(sa) + abs(sb)):
        return None
    y = (pb - pa - sb * b + sa * a) / (sa - sb)
    if not a < y < b:
        return None
    t = (y - a) / h
    if t <= 1e-9 or t >= 1 - 1e-9:
        return None
    return t, pa + sa * (y - a)


def solve_form_iv(prob: MonopolyProblem) -> tuple[float, np.ndarray]:
    """``sup -nu(phi) + mu(R_theta phi)`` over increasing convex ``phi`` on the grid.

    Returns the value and ``phi`` on the grid.  For increasing ``phi`` the
    infimum over ``y <= z`` in ``R_theta`` is attained at ``z = y``.  With
    ``phi`` interpolated linearly, ``y`` ranges over the grid interval and the
    epigraph constraints are ``r_i <= phi(y) + theta(x_i - y)`` for all such
    ``y``.  On each cell ``theta(x_i - y)`` is bounded below by the larger of
    two chord-slope tangents at the cell ends, so besides the two endpoint
    constraints one more at the crossing of the tangents suffices.  The LP is
    then a restriction of the interval problem, and refining the grid only
    tightens the tangents.  For the norms the kinks lie on the grid, the
    tangents are exact and no crossing cut is added.
    """
    _require_1d(prob)
    x, g = prob.mu.points[:, 0], prob.grid
    m, G = x.size, g.size
    v = _Vars()
    v.add("phi", (G,))
    v.add("r", (m,))
    rows, rhs, senses = [], [], []
    _phi_constraints(v, g, rows, rhs, senses, lipschitz=False)
    for i in range(m):
        for l in range(G):
            r = np.zeros(v.n)
            r[v.idx("r", i)] = 1.0
            r[v.idx("phi", l)] = -1.0
            rows.append(r)
            rhs.append(prob.theta_1d(x[i] - g[l])); senses.append("<=")
        for l in range(G - 1):
            cut = _tangent_cut(prob, x[i], g[l], g[l + 1])
            if cut is None:
                continue
            t, val = cut
            r = np.zeros(v.n)
            r[v.idx("r", i)] = 1.0
            r[v.idx("phi", l)] = -(1.0 - t)
            r[v.idx("phi", l + 1)] = -t
            rows.append(r)
            rhs.append(val); senses.append("<=")
    c = np.zeros(v.n)
    ynu = _grid_index(g, prob.nu.points[:, 0])
    for j, k in enumerate(ynu):
        c[v.idx("phi", k)] += prob.nu.weights[j]
    for i in range(m):
        c[v.idx("r", i)] = -prob.mu.weights[i]
    lower = np.concatenate([np.zeros(G), np.full(m, -np.inf)])
    sol = _solve(LinearProgram(c, np.array(rows), rhs, senses, lower=lower), "form iv")
    start = v.blocks["phi"][0]
    return -sol.objective, sol.x[start:start + G].copy()


def solve_kr_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, grid=None) -> tuple[float, np.ndarray]:
    """``sup mu(phi) - nu(phi)`` over increasing convex 1-Lipschitz ``phi`` (1D, absolute value norm)."""
    prob = MonopolyProblem("l1", mu, nu, grid)
    _require_1d(prob)
    g = prob.grid
    G = g.size
    v = _Vars()
    v.add("phi", (G,))
    rows, rhs, senses = [], [], []
    _phi_constraints(v, g, rows, rhs, senses, lipschitz=True)
    c = np.zeros(G)
    for w, k in zip(nu.weights, _grid_index(g, nu.points[:, 0])):
        c[k] += w
    for w, k in zip(mu.weights, _grid_index(g, mu.points[:, 0])):
        c[k] -= w
    sol = _solve(LinearProgram(c, np.array(rows), rhs, senses), "KR dual")
    return -sol.objective, sol.x.copy()


@dataclass
class FourValues:
    v1: float
    v2: float
    v3: float
    v4: float
    tol: float = 1e-4

    @property
    def values(self) -> tuple:
        return (self.v1, self.v2, self.v3, self.v4)

    @property
    def spread(self) -> float:
        return float(max(self.values) - min(self.values))

    @property
    def passed(self) -> bool:
        return bool(self.spread <= self.tol * (1.0 + min(self.values)))

    def to_dict(self) -> dict:
        return {"v1": self.v1, "v2": self.v2, "v3": self.v3, "v4": self.v4, "spread": self.spread,
                "passed": self.passed}


def compare_four(prob: MonopolyProblem, tol: float = 1e-4) -> FourValues:
    """All four values; ``passed`` when the spread is at most ``tol * (1 + min value)``."""
    v1 = solve_form_i(prob)
    v2 = solve_form_ii(prob)
    v3 = solve_form_iii(prob)
    v4, _ = solve_form_iv(prob)
    out = FourValues(float(v1), float(v2), float(v3), float(v4), tol)
    if not all(np.isfinite(out.values)):
        raise MonopolyLPError("non-finite value")
    return out

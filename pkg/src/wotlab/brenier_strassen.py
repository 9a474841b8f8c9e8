"""Projection of mu onto the convex-order lower set of nu.

``V2(mu, nu)^2 = inf_pi sum_i mu_i |x_i - bar(pi_i)|^2`` is the barycentric
weak transport value.  Its optimal barycenter map ``T`` is the gradient of
a convex function with 1-Lipschitz gradient, the pushforward ``eta* = T#mu``
satisfies ``eta* <=c nu``, and ``V2^2 = W2(mu, eta*)^2``.  This module
solves the problem and checks these structural facts on the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .costs import Barycentric
from .engines.fw import FWOptions
from .engines.transport import transport_plan
from .measures import Coupling, DiscreteMeasure, barycenter_map
from .orders import OrderWitness, check_convex_order

MERGE_TOL = 1e-10
W2_TOL = 1e-6
EXHAUSTIVE_CYCLE_POINTS = 7


class InconsistencyError(RuntimeError):
    """The solver output contradicts a structural property that must hold."""


@dataclass
class BSSolution:
    """Optimal value, coupling, barycenter map and projected measure."""

    value: float
    coupling: Coupling
    map_graph: list
    eta_star: DiscreteMeasure
    fw_gap: float = 0.0
    w2_check: float = 0.0

    @property
    def T(self) -> np.ndarray:
        return np.array([t for _, t in self.map_graph])

    def to_dict(self) -> dict:
        return {"value": self.value, "map": [[x.tolist(), t.tolist()] for x, t in self.map_graph],
                "eta_star": self.eta_star.to_dict(), "fw_gap": self.fw_gap, "w2_defect": self.w2_check}


def merge_atoms(points, weights, tol: float = MERGE_TOL) -> DiscreteMeasure:
    """Measure with atoms closer than ``tol`` (sup norm) merged, weights summed."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    reps: list[np.ndarray] = []
    mass: list[float] = []
    for p, wi in zip(P, w):
        for k, r in enumerate(reps):
            if np.max(np.abs(p - r)) <= tol:
                mass[k] += wi
                break
        else:
            reps.append(p.copy())
            mass.append(float(wi))
    return DiscreteMeasure(np.array(reps), np.array(mass))


def solve_v2(mu: DiscreteMeasure, nu: DiscreteMeasure, opts: FWOptions | None = None,
             start_plan=None) -> BSSolution:
    """Solve the barycentric problem and verify ``eta* <=c nu`` and ``V2^2 = W2(mu, eta*)^2``.

    ``start_plan`` (a vertex of the transport polytope) seeds the
    minimum-norm-point iteration; by default the vertex minimizing the
    linearization at the product coupling is used.
    """
    from .wot import _solve_barycentric

    if mu.dim != nu.dim:
        raise ValueError("measures must have the same dimension")
    opts = opts or FWOptions(rel_tol=1e-13)
    model = Barycentric(mu.points, nu.points)
    plan, value, gap, _, _, _, _ = _solve_barycentric(model, mu.weights, nu.weights, opts, start_plan)
    c = Coupling(mu, nu, plan)
    T = barycenter_map(c)
    graph = [(x.copy(), t.copy()) for x, t in zip(mu.points, T)]
    eta = merge_atoms(T, mu.weights)
    if not isinstance(check_convex_order(eta, nu), OrderWitness):
        raise InconsistencyError("projected measure is not dominated by nu in convex order")
    D = np.sum((mu.points[:, None, :] - eta.points[None, :, :]) ** 2, axis=2)
    w2 = transport_plan(D, mu.weights, eta.weights).value
    defect = abs(w2 - value)
    if defect > W2_TOL * (1.0 + value):
        raise InconsistencyError(f"V2^2 = {value:.12g} differs from W2(mu, eta*)^2 = {w2:.12g}")
    return BSSolution(float(value), c, graph, eta, float(gap), float(defect))


# ----------------------------------------------------------------------------


@dataclass
class RSVerdict:
    """Signed worst defects; a check passes when its defect is at most ``tol``."""

    pairwise_ok: bool
    worst_pair: tuple
    cycles_ok: bool
    worst_cycle: tuple
    cycles_checked: int = 0

    @property
    def passed(self) -> bool:
        return self.pairwise_ok and self.cycles_ok

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"passed": self.passed, "pairwise_ok": self.pairwise_ok,
                "worst_pair": [list(self.worst_pair[0]), self.worst_pair[1]],
                "cycles_ok": self.cycles_ok, "worst_cycle": [list(self.worst_cycle[0]), self.worst_cycle[1]],
                "cycles_checked": self.cycles_checked}


def _graph_arrays(graph):
    X = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in graph])
    Y = np.array([np.atleast_1d(np.asarray(y, dtype=float)) for _, y in graph])
    return X, Y


def cycle_sum(X, Y, cycle, L: float) -> float:
    """``sum_k (x_{k+1} - x_k).y_k + |y_{k+1} - y_k|^2 / (2L)`` around a closed cycle."""
    idx = list(cycle)
    nxt = idx[1:] + idx[:1]
    dX = X[nxt] - X[idx]
    dY = Y[nxt] - Y[idx]
    return float(np.sum(dX * Y[idx]) + np.sum(dY * dY) / (2.0 * L))


def _cycles(n: int, cycle_len: int, n_trials: int, seed: int):
    L = min(cycle_len, n)
    if n <= EXHAUSTIVE_CYCLE_POINTS:
        for k in range(2, L + 1):
            for sub in combinations(range(n), k):
                # fix the first element to skip rotations
                for rest in permutations(sub[1:]):
                    yield (sub[0],) + rest
        return
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        k = int(rng.integers(2, L + 1))
        yield tuple(int(i) for i in rng.choice(n, size=k, replace=False))


def check_rockafellar_strassen(graph, L: float = 1.0, cycle_len: int = 4, n_trials: int = 200, seed: int = 0,
                               tol: float = 1e-6) -> RSVerdict:
    """Test whether ``graph`` can lie in the graph of an L-Lipschitz convex gradient.

    Pairwise: ``(x - x').(y - y') - |y - y'|^2 / L >= -tol`` for all pairs;
    the reported defect is ``|y - y'|^2 / L - (x - x').(y - y')``.  Cycles:
    :func:`cycle_sum` ``<= tol``, exhaustively when the graph has at most 7
    points and on ``n_trials`` random cycles otherwise.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    if len(graph) == 0:
        raise ValueError("graph is empty")
    X, Y = _graph_arrays(graph)
    n = X.shape[0]
    worst_pair = ((), -np.inf)
    for i, j in combinations(range(n), 2):
        dx, dy = X[i] - X[j], Y[i] - Y[j]
        defect = float(dy @ dy) / L - float(dx @ dy)
        if defect > worst_pair[1]:
            worst_pair = ((i, j), defect)
    if n < 2:
        worst_pair = ((), 0.0)
    worst_cycle = ((), -np.inf)
    count = 0
    for cyc in _cycles(n, cycle_len, n_trials, seed):
        count += 1
        s = cycle_sum(X, Y, cyc, L)
        if s > worst_cycle[1]:
            worst_cycle = (cyc, s)
    if count == 0:
        worst_cycle = ((), 0.0)
    return RSVerdict(bool(worst_pair[1] <= tol), worst_pair, bool(worst_cycle[1] <= tol), worst_cycle, count)


@dataclass
class LipschitzReport:
    single_valued: bool
    lipschitz: float
    monotonicity_defect: float

    def to_dict(self) -> dict:
        return {"single_valued": self.single_valued, "lipschitz": self.lipschitz,
                "monotonicity_defect": self.monotonicity_defect}


def lipschitz_monotone_probe(graph, tol: float = 1e-10) -> LipschitzReport:
    """Single-valuedness, empirical Lipschitz constant and ``min (x - x').(y - y')``.

    Pairs with ``|x - x'| <= tol`` are excluded from the Lipschitz ratio
    and instead decide single-valuedness.
    """
    if len(graph) == 0:
        raise ValueError("graph is empty")
    X, Y = _graph_arrays(graph)
    single = True
    lip = 0.0
    mono = np.inf
    for i, j in combinations(range(X.shape[0]), 2):
        dx, dy = X[i] - X[j], Y[i] - Y[j]
        nx, ny = float(np.linalg.norm(dx)), float(np.linalg.norm(dy))
        if nx <= tol:
            single &= ny <= tol
            continue
        lip = max(lip, ny / nx)
        mono = min(mono, float(dx @ dy))
    if not np.isfinite(mono):
        mono = 0.0
    return LipschitzReport(bool(single), float(lip), float(mono))


def map_uniqueness_probe(mu: DiscreteMeasure, nu: DiscreteMeasure, n_starts: int = 2, seed: int = 0,
                         opts: FWOptions | None = None) -> float:
    """Largest sup-norm difference between barycenter maps from different start vertices.

    Start vertices are optimal transport plans for random cost matrices.
    """
    rng = np.random.default_rng(seed)
    maps = []
    for _ in range(n_starts):
        cost = rng.standard_normal((len(mu), len(nu)))
        start = transport_plan(cost, mu.weights, nu.weights).plan
        maps.append(solve_v2(mu, nu, opts, start_plan=start).T)
    return float(max(np.abs(a - b).max() for a, b in combinations(maps, 2))) if len(maps) > 1 else 0.0

"""Kelley's cutting-plane method for LPs with convex epigraph terms.

Solves ::

    min  c.x + sum_i h_i(M_i x - z_i)
    s.t. A_eq x = b_eq,  x >= 0

where every ``h_i`` is convex and known only through an oracle returning
its value and a subgradient.  Each ``h_i`` is replaced by a variable
``t_i`` and affine minorants ``t_i >= a + s.(M_i x - z_i)``.  The LP value
is a lower bound, the true objective at the LP solution an upper bound;
the method stops when they meet.  When the cuts describe ``h_i`` exactly
(e.g. all vertices of a polyhedral support set) one LP solve suffices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .lp import OPTIMAL, LinearProgram, simplex_solve


class CuttingPlaneError(RuntimeError):
    pass


@dataclass
class KelleyResult:
    x: np.ndarray
    t: np.ndarray
    lower: float
    upper: float
    eq_dual: np.ndarray
    iterations: int
    n_cuts: int
    converged: bool

    @property
    def gap(self) -> float:
        return max(self.upper - self.lower, 0.0)


def kelley(
    c,
    A_eq,
    b_eq,
    blocks: Sequence[tuple[np.ndarray, np.ndarray]],
    oracle: Callable[[int, np.ndarray], tuple[float, np.ndarray]],
    init_cuts: Sequence[Sequence[tuple[float, np.ndarray]]],
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-12,
    max_iter: int = 500,
    rule: str = "hybrid",
    lp_solver: str = "highs",
) -> KelleyResult:
    """Run Kelley's method.

    Parameters
    ----------
    c : (nx,) array
    A_eq, b_eq : equality system on ``x >= 0``
    blocks : list of ``(M_i, z_i)``, ``M_i`` of shape ``(d_i, nx)``
    oracle : ``oracle(i, u) -> (h_i(u), subgradient)``
    init_cuts : per block, a list of ``(a, s)`` with ``h_i(u) >= a + s.u``;
        they must bound every ``t_i`` from below.
    lp_solver : {"highs", "simplex"}
        Master LP solver: scipy's HiGHS, or the dense tableau simplex of
        :mod:`.lp` with pivot ``rule``.  Masters with many nearly parallel
        cuts are ill-conditioned, which the dense tableau handles poorly.
    """
    c = np.asarray(c, dtype=float)
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float)
    nx = c.size
    nb = len(blocks)
    cuts = [list(cs) for cs in init_cuts]
    obj = np.concatenate([c, np.ones(nb)])
    lower_b = np.concatenate([np.zeros(nx), np.full(nb, -np.inf)])
    n_eq = A_eq.shape[0]

    def objective(x):
        total = float(c @ x)
        for i, (M, z) in enumerate(blocks):
            total += oracle(i, M @ x - z)[0]
        return total

    it = 0
    best = None
    while True:
        it += 1
        rows, rhs = [], []
        for i, (M, z) in enumerate(blocks):
            for a, s in cuts[i]:
                s = np.atleast_1d(np.asarray(s, dtype=float))
                # s.(M x - z) - t_i <= -a
                row = np.zeros(nx + nb)
                row[:nx] = s @ M
                row[nx + i] = -1.0
                rows.append(row)
                rhs.append(float(s @ z) - a)
        A = np.vstack([np.hstack([A_eq, np.zeros((n_eq, nb))])] + ([np.array(rows)] if rows else []))
        b = np.concatenate([b_eq, rhs])
        senses = ["="] * n_eq + ["<="] * len(rows)
        xt, lower, eq_dual = _master(obj, A, b, n_eq, lower_b, senses, lp_solver, rule)
        x = np.maximum(xt[:nx], 0.0)
        t = xt[nx:]
        upper = objective(x)
        if best is None or upper < best[1]:
            best = (x, upper)
        gap = best[1] - lower
        done = gap <= max(rel_tol * (1.0 + abs(best[1])), abs_tol)
        if done or it >= max_iter:
            return KelleyResult(best[0], t, lower, best[1], eq_dual, it,
                                sum(len(cs) for cs in cuts), done)
        added = 0
        for i, (M, z) in enumerate(blocks):
            u = M @ x - z
            h, s = oracle(i, u)
            s = np.atleast_1d(np.asarray(s, dtype=float))
            if h > t[i] + 1e-3 * rel_tol * (1.0 + abs(h)):
                cuts[i].append((h - float(s @ u), s))
                added += 1
        if added == 0:
            # the model is exact at x even though the gap test failed
            return KelleyResult(best[0], t, lower, best[1], eq_dual, it,
                                sum(len(cs) for cs in cuts), True)


def _master(obj, A, b, n_eq, lower_b, senses, lp_solver, rule):
    """Solve one master LP; returns ``(x, value, equality duals)``."""
    if lp_solver == "simplex":
        sol = simplex_solve(LinearProgram(obj, A, b, senses, lower_b), rule=rule)
        if sol.status != OPTIMAL:
            raise CuttingPlaneError(f"cutting-plane LP is {sol.status}")
        return sol.x, sol.objective, sol.dual[:n_eq]
    if lp_solver != "highs":
        raise ValueError(f"unknown lp_solver {lp_solver!r}")
    bounds = [(lo if np.isfinite(lo) else None, None) for lo in lower_b]
    has_ub = A.shape[0] > n_eq
    res = None
    # tight tolerances first; HiGHS occasionally gives up on them
    for tol in (1e-10, 1e-9, None):
        options = {} if tol is None else {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
        res = linprog(obj, A_ub=A[n_eq:] if has_ub else None, b_ub=b[n_eq:] if has_ub else None,
                      A_eq=A[:n_eq], b_eq=b[:n_eq], bounds=bounds, method="highs", options=options)
        if res.status == 0:
            return res.x, float(res.fun), np.asarray(res.eqlin.marginals, dtype=float)
    raise CuttingPlaneError(f"cutting-plane LP failed: {res.message}")

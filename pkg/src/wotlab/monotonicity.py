"""C-monotonicity: stability of a coupling under pooled mass redistributions.

A finite family ``(x_k, p_k)`` is C-monotone when no ``(q_k)`` with
``sum_k q_k = sum_k p_k`` lowers ``sum_k C(x_k, q_k)``.  Every optimal
coupling is C-monotone on its rows, and for the continuous costs the
converse holds as well.  The checks below test this on subsets of rows.

Each ``q_k`` is dominated by the pooled measure ``sum_k p_k``, so the
redistribution problem lives on the pooled support exactly; it is a weak
transport problem between ``N`` atoms of mass ``1/N`` and the pooled
measure divided by ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import comb

import numpy as np

from .costs import CostModel, Entropic
from .engines.fw import FWOptions
from .engines.transport import transport_plan
from .measures import Coupling, DiscreteMeasure, Verdict

SUPPORT_TOL = 1e-12
EXHAUSTIVE_PAIRS_MAX_ROWS = 12
EXHAUSTIVE_CYCLE_LEN = 6


@dataclass(frozen=True)
class PairSet:
    """Atoms ``x_indices[k]`` of mu paired with probability vectors ``P[k]`` over supp(nu)."""

    x_indices: tuple
    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[0] != len(self.x_indices):
            raise ValueError("one probability vector per pair is required")
        if np.any(P < -1e-15) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every p_k must be a probability vector")
        object.__setattr__(self, "P", np.maximum(P, 0.0))
        object.__setattr__(self, "x_indices", tuple(int(i) for i in self.x_indices))

    @classmethod
    def from_coupling(cls, c: Coupling, rows) -> "PairSet":
        rows = list(rows)
        return cls(tuple(rows), c.kernel().rows[rows])

    @property
    def pooled(self) -> np.ndarray:
        return self.P.sum(axis=0)

    def __len__(self) -> int:
        return len(self.x_indices)


@dataclass
class Redistribution:
    """Optimal ``q`` (one row per pair) with ``value = sum_k C(x_k, q_k)``.

    ``initial_value`` is the value of the given family and ``gap`` a
    certified bound on ``value - optimum``.
    """

    q: np.ndarray
    value: float
    initial_value: float
    gap: float
    converged: bool

    @property
    def improvement(self) -> float:
        return self.initial_value - self.value

    def __iter__(self):
        yield self.q
        yield self.value


def family_value(model: CostModel, ps: PairSet) -> float:
    return float(sum(model.eval(i, p) for i, p in zip(ps.x_indices, ps.P)))


def redistribute_optimal(model: CostModel, ps: PairSet, opts: FWOptions | None = None) -> Redistribution:
    """Minimize ``sum_k C(x_k, q_k)`` subject to ``sum_k q_k = sum_k p_k``."""
    from .wot import solve_primal

    opts = opts or FWOptions(rel_tol=1e-10)
    N = len(ps)
    initial = family_value(model, ps)
    if N == 1:
        return Redistribution(ps.P.copy(), initial, initial, 0.0, True)
    pooled = ps.pooled
    cols = np.flatnonzero(pooled > 0)
    sub = model.restrict(list(ps.x_indices), cols)
    mu = DiscreteMeasure(sub.X, np.full(N, 1.0 / N))
    nu = DiscreteMeasure(sub.Y, pooled[cols] / N)
    sol = solve_primal(sub, mu, nu, opts, skip_property_check=True)
    q = np.zeros_like(ps.P)
    q[:, cols] = N * sol.coupling.mass
    q /= q.sum(axis=1, keepdims=True)
    value = family_value(model, PairSet(ps.x_indices, q))
    if value > initial:
        # the solver's tolerance can leave it marginally above an optimal input
        q, value = ps.P.copy(), initial
    return Redistribution(q, value, initial, N * sol.fw_gap, sol.converged)


def subset_gap(model: CostModel, ps: PairSet) -> float:
    """Frank-Wolfe gap of the family within its redistribution polytope.

    Bounds ``family value - optimal redistribution value`` from above (by
    convexity), so a small gap certifies the subset without solving it.
    """
    pooled = ps.pooled
    cols = np.flatnonzero(pooled > 0)
    V = np.vstack([model.first_variation(i, p).values[cols] for i, p in zip(ps.x_indices, ps.P)])
    if not np.all(np.isfinite(V)):
        return np.inf
    res = transport_plan(V, np.ones(len(ps)), pooled[cols])
    return max(float(np.sum(V * ps.P[:, cols])) - res.value, 0.0)


# ----------------------------------------------------------------------------


@dataclass
class MonotonicityVerdict:
    """Worst ``family value - optimal redistribution value`` over the checked subsets."""

    passed: bool
    worst_violation: float
    witness: dict | None = None
    subsets_checked: int = 0
    exhaustive: bool = False
    note: str = ""
    certified_by_gap: int = 0

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        out = {"passed": self.passed, "worst_violation": self.worst_violation,
               "subsets_checked": self.subsets_checked, "exhaustive": self.exhaustive}
        if self.witness is not None:
            out["witness"] = {"rows": list(self.witness["rows"]), "q": np.asarray(self.witness["q"]).tolist()}
        if self.note:
            out["note"] = self.note
        return out


def _subsets(m: int, k_max: int, n_trials: int, seed: int, exhaustive: bool):
    """Row subsets to check, in a deterministic order independent of execution."""
    k_max = min(k_max, m)
    if exhaustive:
        for k in range(2, k_max + 1):
            yield from combinations(range(m), k)
        return
    if m <= EXHAUSTIVE_PAIRS_MAX_ROWS:
        yield from combinations(range(m), 2)
        lo = 3
    else:
        lo = 2
    if k_max < lo:
        return
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        k = int(rng.integers(lo, k_max + 1))
        yield tuple(sorted(int(i) for i in rng.choice(m, size=k, replace=False)))


def row_slacks(model: CostModel, c: Coupling, g) -> np.ndarray:
    """``C(x_i, p_i) + p_i.g - R_C g(x_i) >= 0`` for every kernel row ``p_i``.

    For any ``g`` and any subset of rows, the sum of these slacks bounds
    how much a redistribution within the subset can gain, because
    ``-pooled.g + sum_k R_C g(x_k)`` is a lower bound on the redistribution
    value.  Certified lower bounds of ``R_C`` keep the bound valid for
    inexact transforms.
    """
    K = c.kernel().rows
    g = np.asarray(g, dtype=float)
    out = np.empty(K.shape[0])
    for i, p in enumerate(K):
        out[i] = model.eval(i, p) + float(p @ g) - model.rc(i, g).lower
    return np.maximum(out, 0.0)


def check_c_monotone(model: CostModel, c: Coupling, k_max: int = 4, n_trials: int = 200, seed: int = 0,
                     tol: float = 1e-6, exhaustive: bool = False, opts: FWOptions | None = None,
                     use_gap: bool = True, dual=None) -> MonotonicityVerdict:
    """Check the rows of ``c`` for improving redistributions.

    All row pairs are checked when ``m <= 12``; in addition ``n_trials``
    random subsets of size 3 to ``k_max`` are drawn, trial ``t`` with seed
    ``(seed, t)``.  With ``exhaustive`` every subset of size 2 to ``k_max``
    is checked instead.

    Two upper bounds on a subset's possible gain are tried before its
    redistribution problem is solved: the sum of :func:`row_slacks` for the
    dual vector ``dual`` (when given) and the Frank-Wolfe gap of the subset.
    A subset is certified when a bound is at most ``tol``.  Both are skipped
    when ``use_gap`` is false.
    """
    K = c.kernel().rows
    m = K.shape[0]
    slacks = None
    if use_gap and dual is not None:
        slacks = row_slacks(model, c, getattr(dual, "g", dual))
    worst = -np.inf
    witness = None
    checked = 0
    by_gap = 0
    seen = set()
    for rows in _subsets(m, k_max, n_trials, seed, exhaustive):
        if rows in seen:
            continue
        seen.add(rows)
        checked += 1
        ps = PairSet(rows, K[list(rows)])
        if slacks is not None and slacks[list(rows)].sum() <= tol:
            by_gap += 1
            worst = max(worst, 0.0)
            continue
        if use_gap:
            gap = subset_gap(model, ps)
            if gap <= tol:
                by_gap += 1
                worst = max(worst, 0.0)
                continue
        red = redistribute_optimal(model, ps, opts)
        viol = red.improvement
        if viol > worst:
            worst = viol
            witness = {"rows": rows, "q": red.q} if viol > tol else witness
    if checked == 0:
        worst = 0.0
    note = ""
    if isinstance(model, Entropic):
        note = "necessary condition only for entropic costs"
    passed = bool(worst <= tol)
    return MonotonicityVerdict(passed, float(worst), witness if not passed else None, checked, exhaustive,
                               note, by_gap)


# ----------------------------------------------------------------------------


def check_cyclical_monotone(cost_matrix, c: Coupling, cycle_len: int = 4, n_trials: int = 200, seed: int = 0,
                            tol: float = 1e-9) -> Verdict:
    """Classical cyclical monotonicity of the support of ``c``.

    Tuples of distinct support cells of length 2 to ``cycle_len`` are
    checked against every permutation (tuples longer than 6 against
    ``n_trials`` random permutations).  Tuples are enumerated exhaustively
    when there are at most ``n_trials`` of them, and sampled otherwise.
    """
    C = np.asarray(cost_matrix, dtype=float)
    if C.shape != c.shape:
        raise ValueError("cost matrix and coupling shapes differ")
    cells = np.argwhere(c.mass > SUPPORT_TOL)
    S = len(cells)
    L = min(cycle_len, S)
    total = sum(comb(S, k) for k in range(2, L + 1))
    rng = np.random.default_rng(seed)
    if total <= n_trials:
        tuples = [t for k in range(2, L + 1) for t in combinations(range(S), k)]
    else:
        tuples = []
        for t in range(n_trials):
            r = np.random.default_rng([seed, t])
            k = int(r.integers(2, L + 1))
            tuples.append(tuple(sorted(int(i) for i in r.choice(S, size=k, replace=False))))
    worst = -np.inf
    witness = None
    for tup in tuples:
        I = cells[list(tup), 0]
        J = cells[list(tup), 1]
        base = float(C[I, J].sum())
        k = len(tup)
        if k <= EXHAUSTIVE_CYCLE_LEN:
            perms = permutations(range(k))
        else:
            perms = (rng.permutation(k) for _ in range(n_trials))
        for sigma in perms:
            sigma = list(sigma)
            defect = base - float(C[I, J[sigma]].sum())
            if defect > worst:
                worst = defect
                witness = {"cells": [tuple(map(int, cells[i])) for i in tup], "permutation": sigma}
    if worst == -np.inf:
        worst = 0.0
    passed = bool(worst <= tol)
    return Verdict(passed, float(max(worst, 0.0)), "" if passed else "cyclic rearrangement lowers the cost",
                   witness=None if passed else witness, details={"tuples_checked": len(tuples)})

"""Entropic transport against a positive reference joint ``gamma``.

Minimizers of ``H(pi | gamma)`` over ``Pi(mu, nu)`` have the product form
``pi_ij = gamma_ij f_i g_j``.  This module computes them by log-domain
Sinkhorn sweeps and checks the product form three ways: by a cross-ratio
test on the mass support, by row-pair proportionality of densities, and
constructively by searching for an improving two-atom mass transfer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .measures import Coupling, DiscreteMeasure, Verdict

SUPPORT_TOL = 1e-12


def relative_entropy(p, q) -> float:
    """``sum p log(p/q)`` with ``0 log 0 = 0``; ``+inf`` if ``p`` is not dominated by ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    nz = p > 0
    if np.any(q[nz] <= 0):
        return np.inf
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))


class ReferenceJoint:
    """Strictly positive reference measure on the product of the two supports.

    Attributes
    ----------
    gamma : (m, n) array summing to one
    rows : (m, n) array, the conditional laws gamma_x
    gamma0 : (m,) array, the first marginal
    """

    def __init__(self, gamma):
        G = np.asarray(gamma, dtype=float)
        if G.ndim != 2 or G.size == 0:
            raise ValueError("gamma must be a nonempty matrix")
        if not np.all(np.isfinite(G)) or np.any(G <= 0):
            raise ValueError("gamma must be strictly positive and finite")
        self.gamma = G / G.sum()
        self.gamma0 = self.gamma.sum(axis=1)
        self.rows = self.gamma / self.gamma0[:, None]
        self.gamma.setflags(write=False)

    @property
    def shape(self):
        return self.gamma.shape

    @property
    def log_gamma(self) -> np.ndarray:
        return np.log(self.gamma)


@dataclass
class SinkhornResult:
    """``mass = gamma * exp(u[:, None] + v[None, :])``."""

    coupling: Coupling
    u: np.ndarray
    v: np.ndarray
    iterations: int
    marginal_err: float
    converged: bool
    dual_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def value(self) -> float:
        return relative_entropy(self.coupling.mass, _gamma_of(self))

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "v": self.v.tolist(), "iterations": self.iterations,
                "marginal_err": self.marginal_err, "converged": self.converged}


def _gamma_of(res: SinkhornResult) -> np.ndarray:
    return res.coupling.mass * np.exp(-(res.u[:, None] + res.v[None, :]))


def _weights(m):
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def sinkhorn_plan(log_gamma, a, b, tol: float = 1e-10, max_iter: int = 100000, u0=None, v0=None):
    """Kernel-level Sinkhorn on a (not necessarily normalized) log reference."""
    log_gamma = np.asarray(log_gamma, dtype=float)
    m, n = log_gamma.shape
    u0 = np.zeros(m) if u0 is None else u0
    v0 = np.zeros(n) if v0 is None else v0
    u, v, it, err, trace = _kernels.sinkhorn_log(log_gamma, np.log(a), np.log(b), u0, v0, tol, max_iter)
    plan = np.exp(log_gamma + u[:, None] + v[None, :])
    return plan, u, v, it, err, trace


def sinkhorn(gamma: ReferenceJoint, mu, nu, tol: float = 1e-10, max_iter: int = 100000) -> SinkhornResult:
    """Minimize ``H(pi | gamma)`` over couplings of ``mu`` and ``nu``.

    Alternates exact row and column fits in the log domain until the row
    marginal error (columns are exact after every sweep) is at most ``tol``.
    When ``max_iter`` is exhausted the last state is returned with
    ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not isinstance(gamma, ReferenceJoint):
        gamma = ReferenceJoint(gamma)
    a, b = _weights(mu), _weights(nu)
    if gamma.shape != (a.size, b.size):
        raise ValueError(f"gamma has shape {gamma.shape}, marginals need {(a.size, b.size)}")
    plan, u, v, it, err, trace = sinkhorn_plan(gamma.log_gamma, a, b, tol, max_iter)
    mu_m = mu if isinstance(mu, DiscreteMeasure) else DiscreteMeasure(np.zeros((a.size, 1)), a)
    nu_m = nu if isinstance(nu, DiscreteMeasure) else DiscreteMeasure(np.zeros((b.size, 1)), b)
    return SinkhornResult(Coupling(mu_m, nu_m, plan), u, v, int(it), float(err), bool(err <= tol), trace)


def entropy_decomposition(c: Coupling, gamma: ReferenceJoint) -> tuple[float, float, float]:
    """``(H(pi|gamma), sum_i mu_i H(pi_i|gamma_i), H(mu|gamma0))``; the first equals the sum of the others."""
    if not isinstance(gamma, ReferenceJoint):
        gamma = ReferenceJoint(gamma)
    K = c.kernel().rows
    mu = c.mu.weights
    rows = sum(mu[i] * relative_entropy(K[i], gamma.rows[i]) for i in range(mu.size))
    return relative_entropy(c.mass, gamma.gamma), float(rows), relative_entropy(mu, gamma.gamma0)


# ----------------------------------------------------------------------------


@dataclass
class ProductFormReport:
    """Fit of ``log(mass / gamma) = log f_i + log g_j`` on the mass support."""

    max_log_deviation: float
    f: np.ndarray
    g: np.ndarray
    passed: bool
    worst_entry: tuple | None = None

    def to_dict(self) -> dict:
        return {"max_log_deviation": self.max_log_deviation, "f": self.f.tolist(), "g": self.g.tolist(),
                "passed": self.passed}


def check_product_form(c: Coupling, gamma, tol: float = 1e-8) -> ProductFormReport:
    """Test whether ``mass = gamma * f (x) g`` on the support of ``mass``.

    Potentials are propagated along a spanning forest of the bipartite
    support graph (anchored at ``log f = 0`` in each component); the
    deviation is the worst residual ``|D_ij - log f_i - log g_j|`` over
    supported entries, which for a fully supported plan is the cross-ratio
    ``|D_ij - D_i1 - D_1j + D_11|`` up to the anchor choice.
    """
    G = gamma.gamma if isinstance(gamma, ReferenceJoint) else np.asarray(gamma, dtype=float)
    mass = c.mass
    if G.shape != mass.shape:
        raise ValueError("coupling and gamma shapes differ")
    supp = mass > SUPPORT_TOL
    if not supp.any():
        raise ValueError("coupling has empty support")
    m, n = mass.shape
    D = np.full(mass.shape, np.nan)
    D[supp] = np.log(mass[supp]) - np.log(G[supp])
    lf = np.full(m, np.nan)
    lg = np.full(n, np.nan)
    for root in range(m):
        if not np.isnan(lf[root]) or not supp[root].any():
            continue
        lf[root] = 0.0
        queue = deque([("r", root)])
        while queue:
            side, k = queue.popleft()
            if side == "r":
                for j in np.flatnonzero(supp[k]):
                    if np.isnan(lg[j]):
                        lg[j] = D[k, j] - lf[k]
                        queue.append(("c", j))
            else:
                for i in np.flatnonzero(supp[:, k]):
                    if np.isnan(lf[i]):
                        lf[i] = D[i, k] - lg[k]
                        queue.append(("r", i))
    resid = np.abs(D - lf[:, None] - lg[None, :])
    resid[~supp] = 0.0
    worst = float(resid.max())
    idx = np.unravel_index(int(np.argmax(resid)), resid.shape)
    f = np.exp(np.nan_to_num(lf, nan=-np.inf))
    g = np.exp(np.nan_to_num(lg, nan=-np.inf))
    return ProductFormReport(worst, f, g, bool(worst <= tol), (int(idx[0]), int(idx[1])))


def pairwise_ratio_check(c: Coupling, gamma, tol: float = 1e-8) -> Verdict:
    """Row-pair proportionality of the densities ``kernel_x / gamma_x``.

    For each pair of rows the ratio of densities must be a constant
    ``alpha`` (relative spread at most ``tol``) on the common support, and
    the supports must agree.  ``details["alpha"]`` maps ``(x, z)`` to the
    constant.
    """
    G = gamma if isinstance(gamma, ReferenceJoint) else ReferenceJoint(gamma)
    if G.shape != c.shape:
        raise ValueError("coupling and gamma shapes differ")
    K = c.kernel().rows
    dens = K / G.rows
    m = K.shape[0]
    alphas = {}
    worst = 0.0
    witness = None
    for x, z in combinations(range(m), 2):
        sx = K[x] > SUPPORT_TOL
        sz = K[z] > SUPPORT_TOL
        if np.any(sx != sz):
            return Verdict(False, np.inf, "support mismatch", witness=(x, z), details={"alpha": alphas})
        if not sx.any():
            continue
        r = dens[x, sx] / dens[z, sx]
        spread = float(r.max() / r.min() - 1.0)
        alphas[(x, z)] = float(np.exp(np.mean(np.log(r))))
        if spread > worst:
            worst, witness = spread, (x, z)
    passed = worst <= tol
    return Verdict(passed, worst, "" if passed else "densities not proportional", witness=witness,
                   details={"alpha": alphas})


# ----------------------------------------------------------------------------


@dataclass
class Perturbation:
    q1: np.ndarray
    q2: np.ndarray
    decrease: float
    atoms: tuple
    t: float

    def __iter__(self):
        yield self.q1
        yield self.q2
        yield self.decrease


def improving_perturbation(p1, p2, gamma1, gamma2, ratio_tol: float = 1e-10) -> Perturbation | None:
    """Two-atom mass exchange that lowers ``H(q1|gamma1) + H(q2|gamma2)`` with ``q1 + q2 = p1 + p2``.

    Returns ``None`` when ``h = (p1/gamma1)/(p2/gamma2)`` is constant up to
    the multiplicative tolerance ``1 + ratio_tol``.  Otherwise mass ``t``
    moves to the atom ``a`` minimizing ``h`` in ``q1`` (and away from it in
    ``q2``), balanced at the atom ``b`` maximizing ``h``; ``t`` minimizes the
    entropy sum exactly on the feasible interval.
    """
    p1, p2, g1, g2 = (np.asarray(v, dtype=float) for v in (p1, p2, gamma1, gamma2))
    for v, name in ((p1, "p1"), (p2, "p2"), (g1, "gamma1"), (g2, "gamma2")):
        if np.any(v <= 0):
            raise ValueError(f"{name} must be strictly positive")
    lh = (np.log(p1) - np.log(g1)) - (np.log(p2) - np.log(g2))
    a = int(np.argmin(lh))
    b = int(np.argmax(lh))
    if lh[b] - lh[a] <= np.log1p(ratio_tol):
        return None
    tmax = min(p1[b], p2[a])

    def deriv(t):
        return (np.log(p1[a] + t) - np.log(g1[a]) - np.log(p1[b] - t) + np.log(g1[b])
                - np.log(p2[a] - t) + np.log(g2[a]) + np.log(p2[b] + t) - np.log(g2[b]))

    # deriv(0) = lh[a] - lh[b] < 0 and deriv -> +inf at tmax
    hi = tmax * (1.0 - 1e-13)
    with np.errstate(divide="ignore"):
        d_hi = deriv(hi)
    if d_hi <= 0:
        t_star = hi
    else:
        t_star = brentq(deriv, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    e = np.zeros_like(p1)
    e[a] += 1.0
    e[b] -= 1.0
    q1 = p1 + t_star * e
    q2 = p2 - t_star * e
    before = relative_entropy(p1, g1) + relative_entropy(p2, g2)
    after = relative_entropy(q1, g1) + relative_entropy(q2, g2)
    return Perturbation(q1, q2, float(before - after), (a, b), float(t_star))

"""Weak transport costs ``C(x_i, p)`` on finite supports.

A cost model is bound to the atoms ``X`` of mu and ``Y`` of nu and exposes

* ``eval(i, p)``: the value ``C(x_i, p)`` for a probability vector ``p``;
* ``first_variation(i, p)``: the vector ``v`` such that the derivative of
  ``C(x_i, .)`` at ``p`` in direction ``q - p`` is ``(q - p).v``;
* ``rc(i, g)``: the transform ``R_C g(x_i) = inf_p p.g + C(x_i, p)``.

The four families are :class:`Classical`, :class:`Barycentric`,
:class:`Entropic` and :class:`MonopolyIcx`.  All are convex in ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .engines.cutting_plane import kelley
from .engines.fw import FWOptions, simplex_pairwise_fw
from .measures import DiscreteMeasure, SchemaError

ENTROPY_FLOOR = 1e-300
RC_REL_TOL = 1e-9


@dataclass(frozen=True)
class FirstVariation:
    """Gateaux derivative data of ``p -> C(x, p)``: ``d/dt C(x, p + t(q - p)) = (q - p).values``."""

    values: np.ndarray

    def directional(self, p, q) -> float:
        return float((np.asarray(q) - np.asarray(p)) @ self.values)


@dataclass
class RCResult:
    """Value and minimizer of the R_C transform at one atom.

    ``lower`` is a certified lower bound on the infimum (equal to ``value``
    for closed forms); iterating yields ``(value, p)``.
    """

    value: float
    p: np.ndarray
    lower: float

    def __iter__(self):
        yield self.value
        yield self.p


class CostModel:
    """Common interface; subclasses fill in the per-atom oracles."""

    kind = "abstract"

    def __init__(self, X, Y):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.X.shape[0] == 1 and np.ndim(X) == 1 and len(X) > 1:
            self.X = self.X.T
        if self.Y.shape[0] == 1 and np.ndim(Y) == 1 and len(Y) > 1:
            self.Y = self.Y.T

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape[0], self.Y.shape[0]

    # per-atom oracles -------------------------------------------------
    def eval(self, i: int, p) -> float:
        raise NotImplementedError

    def first_variation(self, i: int, p) -> FirstVariation:
        raise NotImplementedError

    def rc(self, i: int, g) -> RCResult:
        raise NotImplementedError

    def lower_bound(self) -> float:
        raise NotImplementedError

    def to_doc(self) -> dict:
        return {"kind": self.kind}

    def restrict(self, rows, cols) -> "CostModel":
        """The same cost on the atoms ``X[rows]`` and ``Y[cols]``.

        ``C(x, q)`` of the restriction equals ``C(x, q')`` of the original
        where ``q'`` extends ``q`` by zeros; rows may repeat.
        """
        raise NotImplementedError

    # coupling-level objective ----------------------------------------
    def objective(self, plan, a) -> float:
        """``sum_i a_i C(x_i, plan_i / a_i)``."""
        plan = np.asarray(plan, dtype=float)
        a = np.asarray(a, dtype=float)
        return float(sum(a[i] * self.eval(i, plan[i] / a[i]) for i in range(len(a))))

    def gradient(self, plan, a) -> np.ndarray:
        plan = np.asarray(plan, dtype=float)
        a = np.asarray(a, dtype=float)
        return np.vstack([self.first_variation(i, plan[i] / a[i]).values for i in range(len(a))])

    def oracle(self, a) -> Callable:
        """Value/gradient oracle over plans with row masses ``a`` (for Frank-Wolfe)."""
        return lambda plan: (self.objective(plan, a), self.gradient(plan, a))

    def _check_p(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.Y.shape[0],):
            raise ValueError(f"p must have length {self.Y.shape[0]}")
        return p


# ----------------------------------------------------------------------------


class Classical(CostModel):
    """``C(x_i, p) = sum_j p_j c_ij`` for a cost matrix ``c``."""

    kind = "classical"

    def __init__(self, matrix, X=None, Y=None):
        c = np.asarray(matrix, dtype=float)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise ValueError("cost matrix must be a finite 2-d array")
        m, n = c.shape
        super().__init__(np.zeros((m, 1)) if X is None else X, np.zeros((n, 1)) if Y is None else Y)
        self.c = c

    @classmethod
    def from_function(cls, fn: Callable, X, Y) -> "Classical":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return cls([[fn(x, y) for y in Y] for x in X], X, Y)

    def eval(self, i, p):
        return float(self._check_p(p) @ self.c[i])

    def first_variation(self, i, p):
        return FirstVariation(self.c[i].copy())

    def rc(self, i, g):
        vals = np.asarray(g, dtype=float) + self.c[i]
        j = int(np.argmin(vals))
        p = np.zeros(vals.size)
        p[j] = 1.0
        return RCResult(float(vals[j]), p, float(vals[j]))

    def lower_bound(self):
        return float(self.c.min())

    def objective(self, plan, a):
        return float(np.sum(np.asarray(plan) * self.c))

    def gradient(self, plan, a):
        return self.c.copy()

    def to_doc(self):
        return {"kind": self.kind, "matrix": self.c.tolist()}

    def restrict(self, rows, cols):
        rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
        return Classical(self.c[np.ix_(rows, cols)], self.X[rows], self.Y[cols])


class Barycentric(CostModel):
    """``C(x, p) = |x - sum_j p_j y_j|^2``."""

    kind = "barycentric"

    def __init__(self, X, Y):
        super().__init__(X, Y)
        if self.X.shape[1] != self.Y.shape[1]:
            raise ValueError("barycentric cost needs atoms of equal dimension")

    def eval(self, i, p):
        r = self.X[i] - self._check_p(p) @ self.Y
        return float(r @ r)

    def first_variation(self, i, p):
        r = self.X[i] - self._check_p(p) @ self.Y
        return FirstVariation(-2.0 * (self.Y @ r))

    def objective(self, plan, a):
        a = np.asarray(a, dtype=float)
        R = self.X - (np.asarray(plan) @ self.Y) / a[:, None]
        return float(a @ np.sum(R * R, axis=1))

    def gradient(self, plan, a):
        a = np.asarray(a, dtype=float)
        R = self.X - (np.asarray(plan) @ self.Y) / a[:, None]
        return -2.0 * R @ self.Y.T

    def lower_bound(self):
        return 0.0

    def restrict(self, rows, cols):
        return Barycentric(self.X[np.asarray(rows, dtype=int)], self.Y[np.asarray(cols, dtype=int)])

    def _rc_polish(self, i, g, p):
        S = np.flatnonzero(p > 0)
        A = self.Y[S].T
        k = S.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = 2.0 * A.T @ A
        K[:k, k] = -1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([2.0 * A.T @ self.X[i] - g[S], [1.0]])
        alpha = np.linalg.lstsq(K, rhs, rcond=1e-13)[0][:k]
        if np.any(alpha < 0):
            return None
        q = np.zeros_like(p)
        q[S] = alpha
        return q / q.sum()

    def rc(self, i, g, rel_tol: float = RC_REL_TOL):
        g = np.asarray(g, dtype=float)
        x = self.X[i]
        Y = self.Y

        def orc(p):
            r = x - p @ Y
            return float(p @ g + r @ r), g - 2.0 * (Y @ r)

        res = simplex_pairwise_fw(orc, Y.shape[0], None, FWOptions(max_iter=100000, rel_tol=rel_tol * 1e-3),
                                  polish=lambda p: self._rc_polish(i, g, p), polish_every=5)
        if not res.converged and res.gap > rel_tol * (1.0 + abs(res.value)):
            raise RuntimeError(f"R_C inner solve stalled with gap {res.gap:.3e}")
        return RCResult(res.value, res.p, res.value - res.gap)


class Entropic(CostModel):
    """``C(x_i, p) = H(p | gamma_i)`` for strictly positive reference rows ``gamma_i``.

    Rows are renormalized to probability vectors unless ``normalize`` is
    false; restrictions to part of the support keep the original row
    weights so that values agree with the unrestricted cost.
    """

    kind = "entropic"

    def __init__(self, gamma_rows, X=None, Y=None, normalize: bool = True):
        G = np.asarray(gamma_rows, dtype=float)
        if G.ndim != 2 or np.any(~np.isfinite(G)) or np.any(G <= 0):
            raise ValueError("entropic reference rows must be strictly positive")
        m, n = G.shape
        super().__init__(np.zeros((m, 1)) if X is None else X, np.zeros((n, 1)) if Y is None else Y)
        self.joint = G / G.sum()
        self.gamma = G / G.sum(axis=1, keepdims=True) if normalize else G.copy()
        self.log_gamma = np.log(self.gamma)

    def restrict(self, rows, cols):
        rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
        return Entropic(self.gamma[np.ix_(rows, cols)], self.X[rows], self.Y[cols], normalize=False)

    def eval(self, i, p):
        p = self._check_p(p)
        nz = p > 0
        return float(np.sum(p[nz] * (np.log(p[nz]) - self.log_gamma[i, nz])))

    def first_variation(self, i, p):
        p = self._check_p(p)
        return FirstVariation(np.log(np.maximum(p, ENTROPY_FLOOR)) - self.log_gamma[i] + 1.0)

    def objective(self, plan, a):
        plan = np.asarray(plan, dtype=float)
        a = np.asarray(a, dtype=float)
        K = plan / a[:, None]
        nz = plan > 0
        return float(np.sum(plan[nz] * (np.log(K[nz]) - self.log_gamma[nz])))

    def gradient(self, plan, a):
        K = np.asarray(plan, dtype=float) / np.asarray(a, dtype=float)[:, None]
        return np.log(np.maximum(K, ENTROPY_FLOOR)) - self.log_gamma + 1.0

    def rc(self, i, g):
        z = self.log_gamma[i] - np.asarray(g, dtype=float)
        lse = float(logsumexp(z))
        p = np.exp(z - lse)
        return RCResult(-lse, p, -lse)

    def lower_bound(self):
        # H(p | gamma_i) >= -log sum_j gamma_ij, zero for normalized rows
        return float(-np.log(self.gamma.sum(axis=1).max()))

    def to_doc(self):
        return {"kind": self.kind, "gamma": self.joint.tolist()}


# ----------------------------------------------------------------------------
# theta and its monotone hull


@dataclass(frozen=True)
class Theta:
    """Convex function on R^d used by the monopoly cost.

    ``name`` is ``"l1"``, ``"l2"`` or ``"custom"``; custom functions are
    one-dimensional callables with optional derivative ``dfn``.  ``span``
    bounds the search interval ``[u, u + span]`` of the monotone hull.
    """

    name: str = "l2"
    fn: Callable | None = None
    dfn: Callable | None = None
    span: float = 1e3
    _argmin: list = field(default_factory=list, compare=False, repr=False)

    def __call__(self, z) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.name == "l1":
            return float(np.abs(z).sum())
        if self.name == "l2":
            return float(np.sqrt(z @ z))
        return float(self.fn(float(z[0])))

    @property
    def is_norm(self) -> bool:
        return self.name in ("l1", "l2")

    def _zstar(self) -> float:
        if not self._argmin:
            r = minimize_scalar(self.fn, bounds=(-self.span, self.span), method="bounded",
                                options={"xatol": 1e-12})
            z = float(r.x)
            for e in (-self.span, self.span):
                if self.fn(e) < self.fn(z):
                    z = e
            self._argmin.append(z)
        return self._argmin[0]

    def hat(self, u) -> float:
        """``inf_{z >= u} theta(z)`` (componentwise order)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.name == "l1":
            return float(np.maximum(u, 0.0).sum())
        if self.name == "l2":
            up = np.maximum(u, 0.0)
            return float(np.sqrt(up @ up))
        z = self._zstar()
        return float(self.fn(min(max(float(u[0]), z), float(u[0]) + self.span)))

    def hat_subgradient(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.name == "l1":
            return (u > 0).astype(float)
        if self.name == "l2":
            up = np.maximum(u, 0.0)
            nrm = np.sqrt(up @ up)
            return up / nrm if nrm > 0 else np.zeros_like(u)
        z = self._zstar()
        if u[0] <= z:
            return np.zeros(1)
        if self.dfn is not None:
            return np.array([float(self.dfn(float(u[0])))])
        h = 1e-6 * (1.0 + abs(u[0]))
        return np.array([(self.fn(u[0] + h) - self.fn(u[0] - h)) / (2 * h)])

    def minimum(self) -> float:
        if self.is_norm:
            return 0.0
        return float(self.fn(self._zstar()))

    def to_doc(self):
        return self.name


def make_theta(spec) -> Theta:
    if isinstance(spec, Theta):
        return spec
    if spec in ("l1", "l2"):
        return Theta(spec)
    if callable(spec):
        return Theta("custom", spec)
    raise ValueError(f"unknown theta {spec!r}")


class MonopolyIcx(CostModel):
    """``C(x, p) = theta_hat(x - sum_j p_j y_j)`` with ``theta_hat(u) = inf_{z >= u} theta(z)``."""

    kind = "monopoly_icx"

    def __init__(self, X, Y, theta="l2"):
        super().__init__(X, Y)
        if self.X.shape[1] != self.Y.shape[1]:
            raise ValueError("monopoly cost needs atoms of equal dimension")
        self.theta = make_theta(theta)
        if not self.theta.is_norm and self.X.shape[1] != 1:
            raise ValueError("custom theta is supported in one dimension only")

    def eval(self, i, p):
        return self.theta.hat(self.X[i] - self._check_p(p) @ self.Y)

    def first_variation(self, i, p):
        s = self.theta.hat_subgradient(self.X[i] - self._check_p(p) @ self.Y)
        return FirstVariation(-(self.Y @ s))

    def lower_bound(self):
        return self.theta.minimum()

    def exact_cuts(self) -> list | None:
        """All affine pieces of theta_hat when it is polyhedral (l1 or d = 1 norms)."""
        d = self.X.shape[1]
        if self.theta.name == "l1" or (self.theta.is_norm and d == 1):
            return [(0.0, np.array([(k >> r) & 1 for r in range(d)], dtype=float)) for k in range(2 ** d)]
        return None

    def initial_cuts(self) -> list:
        exact = self.exact_cuts()
        if exact is not None:
            return exact
        d = self.X.shape[1]
        if self.theta.is_norm:
            cuts = [(0.0, np.zeros(d))]
            for k in range(d):
                cuts.append((0.0, np.eye(d)[k]))
            cuts.append((0.0, np.ones(d) / np.sqrt(d)))
            return cuts
        z = self.theta._zstar()
        cuts = [(self.theta.minimum(), np.zeros(1))]
        lo = float(min(self.X.min(), self.Y.min()))
        hi = float(max(self.X.max(), self.Y.max()))
        for u in np.linspace(lo - hi, hi - lo, 5):
            if u > z:
                s = self.theta.hat_subgradient([u])
                cuts.append((self.theta.hat([u]) - float(s @ [u]), s))
        return cuts

    def cut_oracle(self, scale: float = 1.0):
        def orc(_i, u):
            return scale * self.theta.hat(u), scale * self.theta.hat_subgradient(u)

        return orc

    def rc(self, i, g, rel_tol: float = RC_REL_TOL):
        g = np.asarray(g, dtype=float)
        n = self.Y.shape[0]
        res = kelley(g, np.ones((1, n)), [1.0], [(-self.Y.T, -self.X[i])], self.cut_oracle(),
                     [self.initial_cuts()], rel_tol=rel_tol, abs_tol=1e-13, max_iter=2000)
        p = res.x / res.x.sum()
        return RCResult(res.upper, p, res.lower)

    def objective(self, plan, a):
        a = np.asarray(a, dtype=float)
        U = self.X - (np.asarray(plan) @ self.Y) / a[:, None]
        return float(sum(a[i] * self.theta.hat(U[i]) for i in range(len(a))))

    def to_doc(self):
        return {"kind": self.kind, "theta": self.theta.to_doc()}

    def restrict(self, rows, cols):
        return MonopolyIcx(self.X[np.asarray(rows, dtype=int)], self.Y[np.asarray(cols, dtype=int)], self.theta)


# ----------------------------------------------------------------------------


def build_cost(cost_doc: Mapping | None, mu: DiscreteMeasure, nu: DiscreteMeasure) -> CostModel:
    """Cost model from a (canonicalized) JSON cost record."""
    doc = dict(cost_doc or {})
    kind = doc.get("kind")
    if kind == "classical":
        return Classical(doc["matrix"], mu.points, nu.points)
    if kind == "barycentric":
        return Barycentric(mu.points, nu.points)
    if kind == "entropic":
        return Entropic(doc["gamma"], mu.points, nu.points)
    if kind == "monopoly_icx":
        return MonopolyIcx(mu.points, nu.points, doc.get("theta", "l2"))
    raise SchemaError("cost.kind", f"unknown cost kind {kind!r}")


def eval_cost(model: CostModel, x_index: int, p) -> float:
    return model.eval(x_index, p)


def first_variation(model: CostModel, x_index: int, p) -> FirstVariation:
    return model.first_variation(x_index, p)


def rc_transform(model: CostModel, g, x_index: int) -> RCResult:
    """``R_C g(x_i) = inf_p p.g + C(x_i, p)`` with its minimizer."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("g must be finite")
    return model.rc(x_index, g)


@dataclass
class PropertyAReport:
    """Sampled convexity check of ``p -> C(x, p)``."""

    max_defect: float
    empirical_lower_bound: float
    n_samples: int
    worst: tuple | None
    passed: bool

    def to_dict(self):
        return {"max_defect": self.max_defect, "empirical_lower_bound": self.empirical_lower_bound,
                "n_samples": self.n_samples, "passed": self.passed}


def _random_simplex(rng, n):
    kind = rng.integers(3)
    if kind == 0:
        p = rng.dirichlet(np.ones(n))
    elif kind == 1:
        p = rng.dirichlet(np.full(n, 0.2))
    else:
        k = int(rng.integers(1, n + 1))
        p = np.zeros(n)
        idx = rng.choice(n, size=k, replace=False)
        p[idx] = rng.dirichlet(np.ones(k))
    return p


def check_property_A(model: CostModel, mu=None, nu=None, n_samples: int = 200, seed: int = 0,
                     tol: float = 1e-9) -> PropertyAReport:
    """Sample ``(x, p, q, lam)`` and report the worst convexity defect.

    The defect is ``C(x, lam p + (1-lam) q) - lam C(x, p) - (1-lam) C(x, q)``;
    the check passes when it never exceeds ``tol``.  ``mu`` and ``nu`` are
    accepted for symmetry with the solvers; the model already carries its
    supports.
    """
    rng = np.random.default_rng(seed)
    m, n = model.shape
    worst = -np.inf
    witness = None
    low = np.inf
    for _ in range(n_samples):
        i = int(rng.integers(m))
        p = _random_simplex(rng, n)
        q = _random_simplex(rng, n)
        lam = float(rng.random())
        cp, cq = model.eval(i, p), model.eval(i, q)
        cm = model.eval(i, lam * p + (1.0 - lam) * q)
        defect = cm - lam * cp - (1.0 - lam) * cq
        low = min(low, cp, cq, cm)
        if defect > worst:
            worst, witness = defect, (i, p, q, lam)
    return PropertyAReport(float(worst), float(low), n_samples, witness, bool(worst <= tol))

"""Convex order and increasing convex order between discrete measures.

``mu <=c nu`` holds iff some coupling has kernel rows with barycenter
``x_i`` (a martingale coupling); ``mu <=icx nu`` iff some coupling has row
barycenters ``>= x_i`` componentwise (a submartingale coupling).  Both are
LP feasibility questions.  A feasible LP yields the coupling as witness.
An infeasible one yields a Farkas ray with row multipliers ``a_i``
(marginal rows) and ``c_i`` (barycenter rows), and the convex function

    phi(y) = max_i  a_i + c_i.(y - x_i)

then satisfies ``mu(phi) - nu(phi) >= y^T b > 0``.  For the icx LP the
slopes ``c_i`` are nonnegative, so ``phi`` is also increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engines.lp import INFEASIBLE, OPTIMAL, LinearProgram, simplex_solve
from .measures import Coupling, DiscreteMeasure

MARGIN_TOL = 1e-8
WITNESS_TOL = 1e-8


@dataclass
class OrderWitness:
    """(Sub)martingale coupling proving the order."""

    coupling: Coupling
    kind: str
    marginal_defect: float
    drift_defect: float

    holds = True

    def to_dict(self, order: str) -> dict:
        return {"order": order, "holds": True, "witness": {"kind": self.kind, "coupling": self.coupling.mass.tolist(),
                                                          "marginal_defect": self.marginal_defect,
                                                          "drift_defect": self.drift_defect}}


@dataclass
class OrderCertificate:
    """Max-of-affine ``phi(y) = max_k intercepts[k] + slopes[k].y`` with ``mu(phi) - nu(phi) = margin > 0``."""

    intercepts: np.ndarray
    slopes: np.ndarray
    kind: str
    margin: float

    holds = False

    def __call__(self, y) -> float:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(np.max(self.intercepts + self.slopes @ y))

    def evaluate(self, points) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        return np.max(self.intercepts[None, :] + P @ self.slopes.T, axis=1)

    def to_dict(self, order: str) -> dict:
        return {"order": order, "holds": False, "certificate": {
            "kind": self.kind, "margin": self.margin,
            "pieces": [[float(a), s.tolist()] for a, s in zip(self.intercepts, self.slopes)]}}


@dataclass
class OrderInconclusive:
    """Neither a validated witness nor a certificate with margin above the threshold."""

    reason: str
    margin: float = 0.0

    holds = "inconclusive"

    def to_dict(self, order: str) -> dict:
        return {"order": order, "holds": "inconclusive", "reason": self.reason, "margin": self.margin}


def _order_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, sense: str) -> LinearProgram:
    if mu.dim != nu.dim:
        raise ValueError("measures must have the same dimension")
    X, Y = mu.points, nu.points
    m, n, d = X.shape[0], Y.shape[0], X.shape[1]
    A = np.zeros((m + n + m * d, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    for i in range(m):
        for r in range(d):
            A[m + n + i * d + r, i * n:(i + 1) * n] = Y[:, r] - X[i, r]
    b = np.concatenate([mu.weights, nu.weights, np.zeros(m * d)])
    senses = ["="] * (m + n) + [sense] * (m * d)
    return LinearProgram(np.zeros(m * n), A, b, senses)


def validate_witness(c: Coupling, kind: str) -> tuple[float, float]:
    """``(marginal defect, drift defect)`` of a (sub)martingale coupling, recomputed from the mass."""
    mass = c.mass
    marg = max(float(np.abs(mass.sum(axis=1) - c.mu.weights).max()),
               float(np.abs(mass.sum(axis=0) - c.nu.weights).max()), float(max(-mass.min(), 0.0)))
    drift = (mass @ c.nu.points) / c.mu.weights[:, None] - c.mu.points
    if kind == "martingale":
        return marg, float(np.abs(drift).max())
    return marg, float(max(-drift.min(), 0.0))


def certificate_margin(cert: OrderCertificate, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """``mu(phi) - nu(phi)`` by direct evaluation."""
    return float(mu.weights @ cert.evaluate(mu.points) - nu.weights @ cert.evaluate(nu.points))


def _decide(mu: DiscreteMeasure, nu: DiscreteMeasure, kind: str):
    sense = "=" if kind == "martingale" else ">="
    cert_kind = "convex" if kind == "martingale" else "icx"
    lp = _order_lp(mu, nu, sense)
    sol = simplex_solve(lp)
    m, n, d = len(mu), len(nu), mu.dim
    if sol.status == OPTIMAL:
        mass = np.maximum(sol.x.reshape(m, n), 0.0)
        c = Coupling(mu, nu, mass)
        marg, drift = validate_witness(c, kind)
        if marg <= WITNESS_TOL and drift <= WITNESS_TOL:
            return OrderWitness(c, kind, marg, drift)
        return OrderInconclusive(f"LP witness fails validation (marginal {marg:.2e}, drift {drift:.2e})")
    if sol.status != INFEASIBLE:
        raise RuntimeError(f"order LP returned {sol.status}")
    y = sol.ray.y_rows
    a = y[:m]
    C = y[m + n:].reshape(m, d)
    if kind == "submartingale":
        C = np.maximum(C, 0.0)
    scale = max(np.abs(a).max(), np.abs(C).max(), 1e-300)
    a, C = a / scale, C / scale
    cert = OrderCertificate(a - np.sum(C * mu.points, axis=1), C, cert_kind, 0.0)
    cert.margin = certificate_margin(cert, mu, nu)
    if cert.margin > MARGIN_TOL:
        return cert
    return OrderInconclusive("separating function margin below threshold", cert.margin)


def check_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Martingale-coupling witness of ``mu <=c nu``, or a convex separating certificate."""
    return _decide(mu, nu, "martingale")


def check_icx_order(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Submartingale-coupling witness of ``mu <=icx nu``, or an increasing convex certificate."""
    return _decide(mu, nu, "submartingale")


def potential_function_cx_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-10) -> bool:
    """1D criterion: equal means and ``int |y - k| dmu <= int |y - k| dnu`` at every support point ``k``."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("one-dimensional measures required")
    x, y = mu.points[:, 0], nu.points[:, 0]
    if abs(mu.weights @ x - nu.weights @ y) > tol:
        return False
    for k in np.concatenate([x, y]):
        if mu.weights @ np.abs(x - k) > nu.weights @ np.abs(y - k) + tol:
            return False
    return True

"""Conditional-gradient solvers over the transport polytope and the simplex.

``frank_wolfe``
    Pairwise Frank-Wolfe for a convex objective given by a value/gradient
    oracle, with the transport LMO as linear subproblem.
``min_norm_point``
    Wolfe's fully corrective variant for objectives of the form
    ``|L(pi) - z|^2``; it terminates after finitely many corrals and is what
    the barycentric cost uses to reach tight gaps quickly.
``simplex_pairwise_fw``
    Pairwise Frank-Wolfe over the probability simplex, for the inner
    problems of the R_C transform.

Every solver reports the Frank-Wolfe gap ``<grad, x - s>`` at its final
iterate, which bounds the suboptimality for convex objectives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..measures import Coupling, DiscreteMeasure
from .transport import transport_plan


class NonFiniteOracleError(ValueError):
    """The objective oracle returned a non-finite value or gradient."""


@dataclass(frozen=True)
class FWOptions:
    """Stopping and step-size controls shared by the conditional-gradient solvers."""

    max_iter: int = 100000
    rel_tol: float = 1e-8
    line_search: str = "exact_quadratic"
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.line_search not in ("exact_quadratic", "armijo"):
            raise ValueError(f"unknown line search {self.line_search!r}")


@dataclass
class FWResult:
    """Final iterate of a Frank-Wolfe run.

    ``f`` and ``g`` are the transport potentials of the last linear
    subproblem (the linearization at the returned coupling).
    """

    coupling: Coupling | None
    value: float
    fw_gap: float
    iterations: int
    converged: bool
    plan: np.ndarray
    f: np.ndarray | None = None
    g: np.ndarray | None = None
    history: list = field(default_factory=list)


def _weights(m) -> np.ndarray:
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def _call(oracle, x):
    val, grad = oracle(x)
    val = float(val)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise NonFiniteOracleError("oracle returned a non-finite value or gradient")
    return val, grad


def _line_search(phi, slope, tmax, value, opts: FWOptions):
    """Step in ``[0, tmax]`` along a descent direction with ``phi'(0) = slope < 0``."""
    if opts.line_search == "exact_quadratic":
        end = phi(tmax)
        curv = (end - value - slope * tmax) / (tmax * tmax)
        if curv <= 0:
            return tmax, end
        t = min(tmax, -slope / (2.0 * curv))
        if t == tmax:
            return t, end
        return t, phi(t)
    t = tmax
    while t > 1e-16:
        v = phi(t)
        if v <= value + opts.armijo_slope * t * slope:
            return t, v
        t *= opts.armijo_factor
    return 0.0, value


def frank_wolfe(oracle: Callable, mu, nu, opts: FWOptions | None = None, start=None) -> FWResult:
    """Minimize a convex function over the couplings of ``mu`` and ``nu``.

    Parameters
    ----------
    oracle : callable
        ``oracle(plan) -> (value, gradient)`` with ``gradient`` of shape
        ``(m, n)``.
    mu, nu : DiscreteMeasure or array_like
        Marginals (measures or plain weight vectors).
    opts : FWOptions
    start : ndarray, optional
        Cost matrix whose optimal vertex is the starting point.  Defaults
        to the gradient at the product coupling.

    Returns
    -------
    FWResult
        ``converged`` is false when ``max_iter`` was hit with the gap above
        tolerance; the last gap is reported either way.
    """
    opts = opts or FWOptions()
    a, b = _weights(mu), _weights(nu)
    if start is None:
        _, start = _call(oracle, np.outer(a, b))
    lmo = transport_plan(start, a, b)
    basis = lmo.basis
    verts = {lmo.plan.round(15).tobytes(): [lmo.plan, 1.0]}
    x = lmo.plan.copy()
    history = []
    it = 0
    converged = False
    while True:
        value, grad = _call(oracle, x)
        history.append(value)
        lmo = transport_plan(grad, a, b, basis)
        basis = lmo.basis
        s = lmo.plan
        gap = float(np.sum(grad * (x - s)))
        if gap <= opts.rel_tol * (1.0 + abs(value)):
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        # pairwise direction: towards s, away from the worst active vertex
        keys = list(verts)
        scores = [float(np.sum(grad * verts[k][0])) for k in keys]
        ka = keys[int(np.argmax(scores))]
        va, la = verts[ka]
        d = s - va
        slope = float(np.sum(grad * d))
        if slope >= 0:
            # away vertex is no worse than s; fall back to a plain FW step
            d = s - x
            slope = -gap
            tmax = 1.0
            pairwise = False
        else:
            tmax = la
            pairwise = True
        t, _ = _line_search(lambda tt: _call(oracle, x + tt * d)[0], slope, tmax, value, opts)
        if t <= 0:
            # no progress possible at machine precision
            break
        x = x + t * d
        ks = s.round(15).tobytes()
        if pairwise:
            verts[ka][1] -= t
            if verts[ka][1] <= 1e-15 or t == tmax:
                del verts[ka]
            if ks in verts:
                verts[ks][1] += t
            else:
                verts[ks] = [s, t]
        else:
            for k in verts:
                verts[k][1] *= 1.0 - t
            if ks in verts:
                verts[ks][1] += t
            else:
                verts[ks] = [s, t]
            for k in [k for k in verts if verts[k][1] <= 1e-15]:
                del verts[k]
    x = np.maximum(x, 0.0)
    coupling = Coupling(mu, nu, x) if isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure) else None
    return FWResult(coupling, value, max(gap, 0.0) if gap > -1e-12 else gap, it, converged,
                    x, lmo.f, lmo.g, history)


# --------------------------------------------------------------------------
# Wolfe's minimum-norm-point algorithm


@dataclass
class MNPResult:
    """Convex combination ``weights`` of the vertices ``payloads`` closest to the origin."""

    point: np.ndarray
    weights: np.ndarray
    payloads: list
    sq_norm: float
    gap: float
    iterations: int
    converged: bool
    last: object = None


def _affine_min(P: np.ndarray) -> np.ndarray:
    """Affine combination (weights summing to one) of the columns of P of least norm."""
    k = P.shape[1]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = P.T @ P
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=1e-14)[0]
    alpha = sol[:k]
    return alpha / alpha.sum()


def min_norm_point(lmo: Callable, start, rel_tol: float = 1e-8, max_iter: int = 10000) -> MNPResult:
    """Wolfe's algorithm for the point of least norm in a polytope.

    Parameters
    ----------
    lmo : callable
        ``lmo(w) -> (point, payload)`` returning a vertex minimizing
        ``w . point``; ``payload`` is carried along (e.g. a transport plan).
    start : tuple
        ``(point, payload)`` of an initial vertex.
    rel_tol : float
        Stop once ``2 x.(x - q) <= rel_tol * (1 + |x|^2)``, the Frank-Wolfe
        gap of ``|x|^2``.
    """
    pts = [np.asarray(start[0], dtype=float)]
    pays = [start[1]]
    lam = np.array([1.0])
    x = pts[0].copy()
    it = 0
    converged = False
    gap = np.inf
    last = None
    while True:
        q, pay, *rest = lmo(x)
        last = rest[0] if rest else None
        q = np.asarray(q, dtype=float)
        xx = float(x @ x)
        gap = 2.0 * (xx - float(x @ q))
        if gap <= rel_tol * (1.0 + xx):
            converged = True
            break
        if it >= max_iter:
            break
        if any(np.array_equal(q, p) for p in pts):
            # the LMO returned a corral vertex: x is optimal up to round-off
            converged = gap <= 1e3 * rel_tol * (1.0 + xx)
            break
        it += 1
        pts.append(q)
        pays.append(pay)
        lam = np.append(lam, 0.0)
        while True:
            P = np.column_stack(pts)
            alpha = _affine_min(P)
            if np.all(alpha > 1e-14):
                lam = alpha
                break
            mask = alpha <= 1e-14
            denom = lam[mask] - alpha[mask]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, lam[mask] / denom, np.inf)
            theta = float(min(1.0, ratios.min()))
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > 1e-14
            if keep.all():
                keep[np.flatnonzero(mask)[int(np.argmin(ratios))]] = False
            pts = [p for p, k in zip(pts, keep) if k]
            pays = [p for p, k in zip(pays, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
        x = np.column_stack(pts) @ lam
    return MNPResult(x, lam, pays, float(x @ x), max(gap, 0.0), it, converged, last)


# --------------------------------------------------------------------------
# simplex


@dataclass
class SimplexFWResult:
    p: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool


def simplex_pairwise_fw(
    oracle: Callable,
    n: int,
    start: int | np.ndarray | None = None,
    opts: FWOptions | None = None,
    polish: Callable | None = None,
    polish_every: int = 10,
) -> SimplexFWResult:
    """Pairwise Frank-Wolfe over the probability simplex in ``R^n``.

    ``polish(p) -> q or None`` may propose an improved point supported on
    the support of ``p`` (e.g. an exact restricted minimizer); it is tried
    every ``polish_every`` iterations and accepted when it is feasible and
    does not increase the objective.
    """
    opts = opts or FWOptions()
    if start is None:
        p = np.full(n, 1.0 / n)
        _, grad0 = _call(oracle, p)
        p = np.zeros(n)
        p[int(np.argmin(grad0))] = 1.0
    elif np.isscalar(start):
        p = np.zeros(n)
        p[int(start)] = 1.0
    else:
        p = np.array(start, dtype=float)
    it = 0
    converged = False
    while True:
        value, grad = _call(oracle, p)
        j = int(np.argmin(grad))
        gap = float(grad @ p - grad[j])
        if gap <= opts.rel_tol * (1.0 + abs(value)):
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        if polish is not None and it % polish_every == 0:
            q = polish(p)
            if q is not None and np.all(q >= 0) and abs(q.sum() - 1.0) < 1e-12:
                vq = _call(oracle, q)[0]
                if vq <= value:
                    p = q
                    continue
        act = np.flatnonzero(p > 0)
        k = int(act[np.argmax(grad[act])])
        d = np.zeros(n)
        d[j] += 1.0
        d[k] -= 1.0
        slope = float(grad[j] - grad[k])
        if slope >= 0:
            break
        tmax = p[k]
        t, _ = _line_search(lambda tt: _call(oracle, p + tt * d)[0], slope, tmax, value, opts)
        if t <= 0:
            break
        p = p + t * d
        if t >= tmax:
            p[k] = 0.0
        p[p < 1e-18] = 0.0
        p /= p.sum()
    return SimplexFWResult(p, value, max(gap, 0.0), it, converged)

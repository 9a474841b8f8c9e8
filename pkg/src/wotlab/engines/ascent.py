"""Monotone supergradient ascent for concave functions on R^n."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class AscentOptions:
    """Controls for :func:`concave_ascent`.

    Steps are ``a * b / (k + b)`` times the supergradient, with ``a`` fixed
    by an Armijo probe at the first iteration.  A trial point is accepted
    only if it does not decrease the value, so accepted values are
    nondecreasing.
    """

    max_iter: int = 2000
    step_tol: float = 1e-12
    improve_tol: float = 1e-14
    patience: int = 30
    b: float = 10.0
    armijo_slope: float = 1e-4


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    iterations: int
    history: list = field(default_factory=list)


def _call(oracle, x):
    val, sg = oracle(x)
    val = float(val)
    sg = np.asarray(sg, dtype=float)
    if not np.isfinite(val) or not np.all(np.isfinite(sg)):
        raise ValueError("oracle returned a non-finite value or supergradient")
    return val, sg


def concave_ascent(
    oracle: Callable,
    start,
    opts: AscentOptions | None = None,
    coordinate_update: Callable | None = None,
) -> AscentResult:
    """Maximize a concave function from ``start``.

    Parameters
    ----------
    oracle : callable
        ``oracle(x) -> (value, supergradient)``.
    start : array_like
    coordinate_update : callable, optional
        ``x -> x'`` performing an exact block-coordinate maximization.  When
        given it replaces the supergradient step (Sinkhorn-type duals).

    Returns
    -------
    AscentResult
        Best point found and its value; ``history`` holds the accepted values.
    """
    opts = opts or AscentOptions()
    x = np.array(start, dtype=float)
    val, sg = _call(oracle, x)
    history = [val]
    it = 0
    stall = 0
    a = None
    while it < opts.max_iter:
        it += 1
        if coordinate_update is not None:
            y = np.asarray(coordinate_update(x), dtype=float)
            vy, sgy = _call(oracle, y)
            gain = vy - val
            if vy >= val:
                x, val, sg = y, vy, sgy
                history.append(val)
            if gain <= opts.improve_tol * (1.0 + abs(val)) or np.linalg.norm(y - x) <= opts.step_tol:
                break
            continue
        nrm2 = float(sg @ sg)
        if nrm2 == 0.0:
            break
        if a is None:
            a = 1.0
            while a > 1e-16:
                vt, _ = _call(oracle, x + a * sg)
                if vt >= val + opts.armijo_slope * a * nrm2:
                    break
                a *= 0.5
        step = a * opts.b / (it - 1 + opts.b)
        if step * np.sqrt(nrm2) <= opts.step_tol:
            break
        y = x + step * sg
        vy, sgy = _call(oracle, y)
        if vy >= val:
            gain = vy - val
            x, val, sg = y, vy, sgy
            history.append(val)
            stall = stall + 1 if gain <= opts.improve_tol * (1.0 + abs(val)) else 0
        else:
            stall += 1
        if stall >= opts.patience:
            break
    return AscentResult(x, val, it, history)

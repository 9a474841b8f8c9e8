"""Linear minimization over the transport polytope.

Thin typed layer over the network-simplex kernel: it accepts either
:class:`DiscreteMeasure` objects or plain weight vectors and returns the
optimal vertex together with its dual potentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..measures import Coupling, DiscreteMeasure


class TransportError(RuntimeError):
    """The network simplex stopped before reaching optimality."""


@dataclass(frozen=True)
class LMOResult:
    """Optimal transport vertex ``plan`` with potentials ``f`` (rows), ``g`` (columns).

    ``f_i + g_j <= cost_ij`` everywhere, with equality on the basic cells
    (a superset of the support of ``plan``).
    """

    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    value: float
    basis: np.ndarray
    iterations: int

    def certificate_defect(self, cost) -> tuple[float, float]:
        """Worst violation of dual feasibility and of complementary slackness."""
        red = np.asarray(cost, dtype=float) - self.f[:, None] - self.g[None, :]
        feas = float(max(-red.min(), 0.0))
        supp = self.plan > 1e-12
        slack = float(np.abs(red[supp]).max()) if supp.any() else 0.0
        return feas, slack


def _weights(m) -> np.ndarray:
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def transport_plan(cost, a, b, basis=None, tol: float = 1e-12, max_iter: int = 100000) -> LMOResult:
    """Solve ``min <cost, P>`` over couplings of weight vectors ``a`` and ``b``.

    ``basis`` (an ``(m + n - 1, 2)`` array from a previous call) warm-starts
    the simplex when it is still primal feasible for the new marginals.
    """
    cost = np.ascontiguousarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cost.shape != (a.size, b.size):
        raise ValueError(f"cost has shape {cost.shape}, expected {(a.size, b.size)}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    plan, u, v, bas, it, status = _kernels.transport_simplex(cost, a, b, basis, tol, max_iter)
    if status != 0:
        raise TransportError(f"network simplex hit max_iter={max_iter}")
    return LMOResult(plan, u, v, float(np.sum(plan * cost)), bas, it)


def transport_lmo(cost_matrix, mu, nu, basis=None) -> tuple[Coupling, LMOResult]:
    """Optimal classical coupling for ``cost_matrix`` between ``mu`` and ``nu``.

    Returns the :class:`Coupling` and the full :class:`LMOResult` (value,
    potentials, basis).
    """
    res = transport_plan(cost_matrix, _weights(mu), _weights(nu), basis)
    return Coupling(mu, nu, res.plan), res

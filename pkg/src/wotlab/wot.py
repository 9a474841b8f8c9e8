"""Primal and dual weak transport on finite supports.

The primal value is ``V = inf_pi sum_i mu_i C(x_i, pi_i)`` over couplings
with kernel rows ``pi_i``.  The dual is ``sup_g D(g)`` with

    D(g) = -nu(g) + sum_i mu_i R_C g(x_i),   R_C g(x) = inf_p p.g + C(x, p).

Any ``g`` gives ``D(g) <= V`` and the two agree at the optimum.  The
primal solver picks an engine suited to the cost family; every engine
returns a certified suboptimality bound ``fw_gap`` and a starting dual
vector ``g_start`` with ``D(g_start) >= V - fw_gap``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import Barycentric, Classical, CostModel, Entropic, MonopolyIcx, check_property_A
from .engines.ascent import AscentOptions, concave_ascent
from .engines.cutting_plane import kelley
from .engines.fw import FWOptions, frank_wolfe, min_norm_point
from .engines.transport import transport_plan
from .measures import Coupling, DiscreteMeasure, Verdict, fingerprint
from .schrodinger import sinkhorn_plan

GAP_TOL = 1e-5
WEAK_DUALITY_SLACK = 1e-7


class PropertyAError(ValueError):
    """The cost failed the sampled convexity check."""


class ConvergenceError(RuntimeError):
    """A solver stopped with its gap above tolerance."""


@dataclass
class Solution:
    """Primal solution with its certified suboptimality bound ``fw_gap``."""

    coupling: Coupling
    value: float
    fw_gap: float
    fingerprint: str
    method: str = "frank_wolfe"
    converged: bool = True
    iterations: int = 0
    g_start: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self, emit_coupling: bool = False) -> dict:
        out = {"value": self.value, "fw_gap": self.fw_gap, "method": self.method,
               "converged": self.converged, "iterations": self.iterations}
        if emit_coupling:
            out["coupling"] = self.coupling.mass.tolist()
        return out


@dataclass
class DualCertificate:
    """Dual vector ``g`` on supp(nu) with certified lower bounds ``r_values`` of ``R_C g``.

    ``dual_value = -nu(g) + sum_i mu_i r_values_i`` is a lower bound on the
    primal value whatever ``g`` is.
    """

    g: np.ndarray
    r_values: np.ndarray
    dual_value: float
    fingerprint: str
    iterations: int = 0
    history: list = field(default_factory=list)
    init: str = "warm"

    def to_dict(self, emit_g: bool = False) -> dict:
        out = {"dual_value": self.dual_value, "iterations": self.iterations, "init": self.init}
        if emit_g:
            out["g"] = self.g.tolist()
        return out


@dataclass
class GapReport:
    primal: float
    dual: float
    gap: float
    rel_gap: float
    passed: bool

    def to_dict(self) -> dict:
        return {"primal": self.primal, "dual": self.dual, "gap": self.gap, "rel_gap": self.rel_gap,
                "passed": self.passed}


def _weights(m) -> np.ndarray:
    return m.weights if isinstance(m, DiscreteMeasure) else np.asarray(m, dtype=float)


def instance_fingerprint(model: CostModel, mu, nu) -> str:
    return fingerprint(mu, nu, model.to_doc())


def primal_value(model: CostModel, c: Coupling) -> float:
    """``sum_i mu_i C(x_i, kernel row i)`` of an arbitrary coupling."""
    return model.objective(c.mass, c.mu.weights)


# ----------------------------------------------------------------------------
# primal engines


def _lmo_dual(grad, a, b):
    """``-g`` from the transport potentials of ``grad``: the dual start vector."""
    res = transport_plan(grad, a, b)
    return -res.g, res


def _solve_classical(model: Classical, a, b, opts):
    res = transport_plan(model.c, a, b)
    return res.plan, res.value, 0.0, True, res.iterations, -res.g, {}


def _solve_barycentric(model: Barycentric, a, b, opts: FWOptions, start_plan=None):
    X, Y = model.X, model.Y
    sq = np.sqrt(a)
    z = (sq[:, None] * X).ravel()
    state = {"basis": None}

    def image(plan):
        return ((plan @ Y) / sq[:, None]).ravel() - z

    def lmo(w):
        W = w.reshape(X.shape)
        cost = (W @ Y.T) / sq[:, None]
        res = transport_plan(cost, a, b, state["basis"])
        state["basis"] = res.basis
        return image(res.plan), res.plan

    if start_plan is None:
        start_plan = transport_plan(model.gradient(np.outer(a, b), a), a, b).plan
    mnp = min_norm_point(lmo, (image(start_plan), start_plan), rel_tol=opts.rel_tol, max_iter=opts.max_iter)
    plan = sum(w * p for w, p in zip(mnp.weights, mnp.payloads))
    plan = np.maximum(plan, 0.0)
    value = model.objective(plan, a)
    grad = model.gradient(plan, a)
    g0, lmo_res = _lmo_dual(grad, a, b)
    gap = max(float(np.sum(grad * plan)) - lmo_res.value, 0.0)
    return plan, value, gap, mnp.converged, mnp.iterations, g0, {"corral_size": len(mnp.payloads)}


def _solve_entropic(model: Entropic, a, b, opts: FWOptions):
    log_ref = np.log(a)[:, None] + model.log_gamma
    tol = min(1e-11, opts.rel_tol * 1e-3)
    plan, u, v, it, err, _ = sinkhorn_plan(log_ref, a, b, tol=tol, max_iter=opts.max_iter)
    value = model.objective(plan, a)
    grad = model.gradient(plan, a)
    gap = max(float(np.sum(grad * plan)) - transport_plan(grad, a, b).value, 0.0)
    return plan, value, gap, bool(err <= tol), int(it), -v, {"marginal_err": float(err)}


def _solve_monopoly(model: MonopolyIcx, a, b, opts: FWOptions):
    m, n = model.shape
    d = model.X.shape[1]
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    blocks = []
    for i in range(m):
        M = np.zeros((d, m * n))
        M[:, i * n:(i + 1) * n] = -model.Y.T / a[i]
        blocks.append((M, -model.X[i]))
    base = model.initial_cuts()
    init = [[(a[i] * c0, a[i] * s) for c0, s in base] for i in range(m)]

    def orc(i, u):
        return a[i] * model.theta.hat(u), a[i] * model.theta.hat_subgradient(u)

    res = kelley(np.zeros(m * n), A_eq, np.concatenate([a, b]), blocks, orc, init,
                 rel_tol=opts.rel_tol, abs_tol=1e-13, max_iter=min(opts.max_iter, 2000))
    plan = np.maximum(res.x.reshape(m, n), 0.0)
    g0 = -res.eq_dual[m:]
    return plan, res.upper, res.gap, res.converged, res.iterations, g0, {"cuts": res.n_cuts}


def _solve_fw(model: CostModel, a, b, opts: FWOptions):
    res = frank_wolfe(model.oracle(a), a, b, opts)
    g0, _ = _lmo_dual(model.gradient(res.plan, a), a, b)
    return res.plan, res.value, res.fw_gap, res.converged, res.iterations, g0, {}


_ENGINES = {
    "network_simplex": _solve_classical,
    "min_norm_point": _solve_barycentric,
    "sinkhorn": _solve_entropic,
    "cutting_plane": _solve_monopoly,
    "frank_wolfe": _solve_fw,
}


def default_method(model: CostModel) -> str:
    if isinstance(model, Classical):
        return "network_simplex"
    if isinstance(model, Barycentric):
        return "min_norm_point"
    if isinstance(model, Entropic):
        return "sinkhorn"
    if isinstance(model, MonopolyIcx):
        return "cutting_plane"
    return "frank_wolfe"


def solve_primal(model: CostModel, mu: DiscreteMeasure, nu: DiscreteMeasure, opts: FWOptions | None = None,
                 skip_property_check: bool = False, method: str = "auto", strict: bool = False) -> Solution:
    """Minimize ``sum_i mu_i C(x_i, pi_i)`` over couplings of ``mu`` and ``nu``.

    Parameters
    ----------
    model : CostModel
        Bound to the atoms of ``mu`` and ``nu``.
    opts : FWOptions
        ``rel_tol`` is the target for ``fw_gap / (1 + |value|)``.
    skip_property_check : bool
        Skip the sampled convexity check of the cost.
    method : str
        ``"auto"`` picks the engine for the cost family: network simplex
        (classical), minimum-norm-point (barycentric), Sinkhorn
        (entropic), cutting planes (monopoly), Frank-Wolfe otherwise.
        ``"frank_wolfe"`` forces the generic driver.
    strict : bool
        Raise :class:`ConvergenceError` instead of flagging non-convergence.
    """
    opts = opts or FWOptions()
    a, b = _weights(mu), _weights(nu)
    if model.shape != (a.size, b.size):
        raise ValueError(f"cost model has shape {model.shape}, marginals need {(a.size, b.size)}")
    if not skip_property_check:
        rep = check_property_A(model, n_samples=200, seed=0)
        if not rep.passed:
            raise PropertyAError(f"cost is not convex in p: defect {rep.max_defect:.3e}")
    name = default_method(model) if method == "auto" else method
    if name not in _ENGINES:
        raise ValueError(f"unknown method {method!r}")
    plan, value, gap, conv, it, g0, info = _ENGINES[name](model, a, b, opts)
    if not np.isfinite(value):
        raise ConvergenceError("non-finite objective")
    converged = bool(conv or gap <= opts.rel_tol * (1.0 + abs(value)))
    if strict and not converged:
        raise ConvergenceError(f"{name} stopped with gap {gap:.3e}")
    return Solution(Coupling(mu, nu, plan), float(value), float(gap), instance_fingerprint(model, mu, nu),
                    name, converged, int(it), np.asarray(g0, dtype=float), info)


# ----------------------------------------------------------------------------
# dual


def rc_values(model: CostModel, g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(values, certified lower bounds, argmins)`` of ``R_C g`` at every atom of mu."""
    m, n = model.shape
    vals = np.empty(m)
    low = np.empty(m)
    P = np.empty((m, n))
    for i in range(m):
        r = model.rc(i, g)
        vals[i], low[i], P[i] = r.value, r.lower, r.p
    return vals, low, P


def dual_objective(model: CostModel, mu, nu, g) -> tuple[float, np.ndarray]:
    """Certified ``D(g)`` and a supergradient ``sum_i mu_i p_i* - nu``."""
    a, b = _weights(mu), _weights(nu)
    g = np.asarray(g, dtype=float)
    _, low, P = rc_values(model, g)
    return float(-b @ g + a @ low), a @ P - b


def solve_dual(model: CostModel, mu: DiscreteMeasure, nu: DiscreteMeasure, opts: AscentOptions | None = None,
               init: str = "warm", solution: Solution | None = None, primal_opts: FWOptions | None = None,
               skip_property_check: bool = False, target_rel_gap: float = 1e-7) -> DualCertificate:
    """Maximize ``D(g)`` by monotone supergradient ascent.

    ``init="warm"`` starts from the dual vector of a primal solve (computed
    here when ``solution`` is not given); ``init="zero"`` starts from
    ``g = 0``.  Entropic costs use the exact Sinkhorn column update in place
    of supergradient steps.  A warm start whose gap to the primal value is
    already within ``target_rel_gap`` (relative) is returned without
    ascent.  The best certificate found is returned even if the ascent
    stalls; it is always a valid lower bound.
    """
    a, b = _weights(mu), _weights(nu)
    fp = instance_fingerprint(model, mu, nu)
    if init == "warm":
        if solution is None:
            solution = solve_primal(model, mu, nu, primal_opts, skip_property_check=skip_property_check)
        elif solution.fingerprint != fp:
            raise ValueError("solution belongs to a different instance")
        g0 = np.array(solution.g_start, dtype=float)
    elif init == "zero":
        g0 = np.zeros(b.size)
    else:
        raise ValueError(f"unknown init {init!r}")
    opts = opts or AscentOptions(max_iter=50, patience=5)

    def oracle(g):
        return dual_objective(model, a, b, g)

    coord = None
    if isinstance(model, Entropic):
        log_ref = np.log(a)[:, None] + model.log_gamma
        log_b = np.log(b)

        def coord(g):
            # implicit row potentials u_i = R_C g(x_i), then an exact column fit
            z = model.log_gamma - g[None, :]
            zmax = z.max(axis=1, keepdims=True)
            u = -(zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1)))
            w = log_ref + u[:, None]
            wmax = w.max(axis=0)
            v = log_b - (wmax + np.log(np.exp(w - wmax).sum(axis=0)))
            return -v

    if solution is not None and init == "warm":
        val0 = oracle(g0)[0]
        if solution.value - val0 <= target_rel_gap * (1.0 + abs(solution.value)):
            opts = AscentOptions(max_iter=0)
    res = concave_ascent(oracle, g0, opts, coordinate_update=coord)
    g = res.x
    _, low, _ = rc_values(model, g)
    dual = float(-b @ g + a @ low)
    return DualCertificate(g, low, dual, fp, res.iterations, res.history, init)


def duality_gap(sol: Solution, cert: DualCertificate, tol: float = GAP_TOL) -> GapReport:
    """Primal minus dual; raises ``ValueError`` for certificates of another instance."""
    if sol.fingerprint != cert.fingerprint:
        raise ValueError(f"fingerprint mismatch: {sol.fingerprint} != {cert.fingerprint}")
    gap = sol.value - cert.dual_value
    rel = gap / (1.0 + abs(sol.value))
    return GapReport(sol.value, cert.dual_value, gap, rel, bool(rel <= tol and gap >= -WEAK_DUALITY_SLACK))


# ----------------------------------------------------------------------------
# backward transfer


def legendre_transfer(model: CostModel, g) -> np.ndarray:
    """``T(g)(x_i) = sup_p p.g - C(x_i, p) = -R_C(-g)(x_i)`` at every atom of mu."""
    g = np.asarray(g, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("g must be finite")
    vals, _, _ = rc_values(model, -g)
    return -vals


def verify_transfer_representation(model: CostModel, mu, nu, tol: float = 1e-4, solution: Solution | None = None,
                                   cert: DualCertificate | None = None, skip_property_check: bool = False) -> Verdict:
    """Check ``V(mu, nu) = sup_h nu(h) - mu(T h)`` at the ascent-optimized ``h``.

    ``h = -g`` for the dual certificate ``g``; the right-hand side is
    recomputed through :func:`legendre_transfer` and compared with the
    primal value at relative tolerance ``tol``.
    """
    if solution is None:
        solution = solve_primal(model, mu, nu, skip_property_check=skip_property_check)
    if cert is None:
        cert = solve_dual(model, mu, nu, solution=solution)
    a, b = _weights(mu), _weights(nu)
    h = -cert.g
    transfer_value = float(b @ h - a @ legendre_transfer(model, h))
    rel = abs(transfer_value - solution.value) / (1.0 + abs(solution.value))
    passed = rel <= tol
    return Verdict(passed, rel, "" if passed else "transfer value differs from primal value",
                   details={"primal": solution.value, "transfer": transfer_value})


# ----------------------------------------------------------------------------
# stability


@dataclass
class StabilityReport:
    base_value: float
    values: list
    drifts: list
    max_downward_jump: float
    scale: float

    def to_dict(self) -> dict:
        return {"base_value": self.base_value, "values": self.values, "drifts": self.drifts,
                "max_downward_jump": self.max_downward_jump, "scale": self.scale}


def _perturb(w, rng, scale):
    out = w * (1.0 + scale * rng.uniform(-1.0, 1.0, size=w.size))
    return out / out.sum()


def stability_probe(model: CostModel, mu: DiscreteMeasure, nu: DiscreteMeasure, n_perturb: int = 5,
                    scale: float = 1e-3, seed: int = 0, lipschitz: float = 0.0,
                    opts: FWOptions | None = None) -> StabilityReport:
    """Re-solve under random relative weight perturbations of size at most ``scale``.

    ``drifts`` are total-variation distances of the perturbed marginals;
    the reported jump is ``max(V - V' - lipschitz * drift, 0)``.  The report
    is informational.
    """
    base = solve_primal(model, mu, nu, opts, skip_property_check=True).value
    rng = np.random.default_rng(seed)
    values, drifts = [], []
    jump = 0.0
    for _ in range(n_perturb):
        a = _perturb(mu.weights, rng, scale)
        b = _perturb(nu.weights, rng, scale)
        v = solve_primal(model, DiscreteMeasure(mu.points, a), DiscreteMeasure(nu.points, b), opts,
                         skip_property_check=True).value
        drift = 0.5 * (np.abs(a - mu.weights).sum() + np.abs(b - nu.weights).sum())
        values.append(v)
        drifts.append(float(drift))
        jump = max(jump, base - v - lipschitz * drift)
    return StabilityReport(base, values, drifts, float(jump), scale)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize

from wotlab.engines.ascent import AscentOptions, concave_ascent
from wotlab.engines.cutting_plane import kelley
from wotlab.engines.fw import (
    FWOptions,
    NonFiniteOracleError,
    frank_wolfe,
    min_norm_point,
    simplex_pairwise_fw,
)
from wotlab.engines.transport import transport_plan


def _project_simplex(z):
    """Euclidean projection onto the probability simplex (sort-based formula)."""
    u = np.sort(z)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, z.size + 1) > css - 1)[0][-1]
    tau = (css[k] - 1) / (k + 1)
    return np.maximum(z - tau, 0.0)


def _quadratic_oracle(T):
    return lambda P: (float(np.sum((P - T) ** 2)), 2 * (P - T))


def _qp_reference(T, a, b):
    m, n = T.shape
    cons = [{"type": "eq", "fun": lambda z: z.reshape(m, n).sum(axis=1) - a},
            {"type": "eq", "fun": lambda z: z.reshape(m, n).sum(axis=0)[:-1] - b[:-1]}]
    r = minimize(lambda z: np.sum((z - T.ravel()) ** 2), np.outer(a, b).ravel(), jac=lambda z: 2 * (z - T.ravel()),
                 method="SLSQP", constraints=cons, bounds=[(0, None)] * (m * n), options={"ftol": 1e-15, "maxiter": 500})
    return r.fun


def test_frank_wolfe_matches_qp():
    rng = np.random.default_rng(0)
    for _ in range(5):
        m, n = 3, 4
        T = rng.standard_normal((m, n)) * 0.3
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        res = frank_wolfe(_quadratic_oracle(T), a, b, FWOptions(rel_tol=1e-12))
        assert res.converged
        ref = _qp_reference(T, a, b)
        assert res.value == pytest.approx(ref, abs=1e-8)
        np.testing.assert_allclose(res.plan.sum(axis=1), a, atol=1e-12)
        np.testing.assert_allclose(res.plan.sum(axis=0), b, atol=1e-12)


@pytest.mark.parametrize("line_search", ["exact_quadratic", "armijo"])
def test_frank_wolfe_gap_bounds_suboptimality(line_search):
    rng = np.random.default_rng(1)
    T = rng.standard_normal((4, 4))
    a, b = np.full(4, 0.25), rng.dirichlet(np.ones(4))
    ref = _qp_reference(T, a, b)
    for k in (1, 2, 5, 20):
        res = frank_wolfe(_quadratic_oracle(T), a, b, FWOptions(max_iter=k, rel_tol=1e-14, line_search=line_search))
        assert res.value - ref <= res.fw_gap + 1e-9
        assert res.value >= ref - 1e-9


def test_frank_wolfe_history_is_nonincreasing():
    rng = np.random.default_rng(2)
    T = rng.standard_normal((5, 3))
    res = frank_wolfe(_quadratic_oracle(T), np.full(5, 0.2), np.full(3, 1 / 3), FWOptions(max_iter=200))
    vals = [h[0] if isinstance(h, (tuple, list)) else h for h in res.history]
    assert all(v2 <= v1 + 1e-12 for v1, v2 in zip(vals, vals[1:]))


def test_non_finite_oracle_raises():
    with pytest.raises(NonFiniteOracleError):
        frank_wolfe(lambda P: (np.nan, P), [0.5, 0.5], [0.5, 0.5])


def test_fw_options_validation():
    with pytest.raises(ValueError):
        FWOptions(max_iter=0)
    with pytest.raises(ValueError):
        FWOptions(rel_tol=0.0)
    with pytest.raises(ValueError):
        FWOptions(line_search="backtrack")


def test_min_norm_point_on_a_box():
    # the box [1, 2] x [-1, 3] is closest to the origin at (1, 0)
    verts = [np.array(v, dtype=float) for v in ((1, -1), (2, -1), (1, 3), (2, 3))]

    def lmo(w):
        k = int(np.argmin([w @ v for v in verts]))
        return verts[k], k

    res = min_norm_point(lmo, (verts[3], 3), rel_tol=1e-14)
    assert res.converged
    np.testing.assert_allclose(res.point, [1.0, 0.0], atol=1e-12)
    assert res.sq_norm == pytest.approx(1.0)
    np.testing.assert_allclose(res.weights.sum(), 1.0)


def test_min_norm_point_on_transport_images():
    """Closest point to z of {P @ y : P a coupling}, checked against SLSQP."""
    rng = np.random.default_rng(3)
    a, b = np.full(3, 1 / 3), rng.dirichlet(np.ones(4))
    Y = rng.standard_normal(4)
    z = rng.standard_normal(3) * 0.1

    def lmo(w):
        P = transport_plan(np.outer(w, Y), a, b).plan
        return P @ Y - z, P

    P0 = transport_plan(rng.random((3, 4)), a, b).plan
    res = min_norm_point(lmo, (P0 @ Y - z, P0), rel_tol=1e-14)
    m, n = 3, 4
    cons = [{"type": "eq", "fun": lambda q: q.reshape(m, n).sum(axis=1) - a},
            {"type": "eq", "fun": lambda q: q.reshape(m, n).sum(axis=0)[:-1] - b[:-1]}]
    ref = minimize(lambda q: np.sum((q.reshape(m, n) @ Y - z) ** 2), np.outer(a, b).ravel(), method="SLSQP",
                   constraints=cons, bounds=[(0, None)] * 12, options={"ftol": 1e-15, "maxiter": 500})
    assert res.sq_norm == pytest.approx(ref.fun, abs=1e-9)


@given(st.integers(0, 10_000), st.integers(2, 9))
def test_simplex_fw_matches_projection(seed, n):
    z = np.random.default_rng(seed).standard_normal(n)
    res = simplex_pairwise_fw(lambda p: (float(np.sum((p - z) ** 2)), 2 * (p - z)), n, opts=FWOptions(rel_tol=1e-13))
    np.testing.assert_allclose(res.p, _project_simplex(z), atol=1e-6)
    assert res.value == pytest.approx(float(np.sum((_project_simplex(z) - z) ** 2)), abs=1e-10)


def test_concave_ascent_nonsmooth():
    c = np.array([0.3, -1.2, 2.0])
    res = concave_ascent(lambda x: (-float(np.abs(x - c).sum()), -np.sign(x - c)), np.zeros(3),
                         AscentOptions(max_iter=5000))
    # diminishing steps converge at a sublinear rate from -3.5
    assert res.value >= -1e-2
    assert all(v2 >= v1 for v1, v2 in zip(res.history, res.history[1:]))


def test_concave_ascent_coordinate_update():
    # exact coordinate maximization of a separable quadratic finishes in one step
    c = np.array([1.0, 2.0])
    res = concave_ascent(lambda x: (-float(np.sum((x - c) ** 2)), -2 * (x - c)), np.zeros(2),
                         coordinate_update=lambda x: c.copy())
    assert res.value == pytest.approx(0.0, abs=1e-14)


def test_kelley_against_lp():
    """min sum_i |x_i - z_i| over the simplex, the same problem as an LP."""
    rng = np.random.default_rng(4)
    n = 5
    z = rng.standard_normal(n)
    blocks = [(np.eye(n)[[i]], np.array([z[i]])) for i in range(n)]
    init = [[(0.0, np.array([1.0])), (0.0, np.array([-1.0]))] for _ in range(n)]
    res = kelley(np.zeros(n), np.ones((1, n)), np.array([1.0]), blocks,
                 lambda i, u: (float(abs(u[0])), np.sign(u)), init)
    assert res.converged
    # LP with t_i >= +-(x_i - z_i)
    A_ub = np.block([[np.eye(n), -np.eye(n)], [-np.eye(n), -np.eye(n)]])
    ref = linprog(np.concatenate([np.zeros(n), np.ones(n)]), A_ub=A_ub, b_ub=np.concatenate([z, -z]),
                  A_eq=np.concatenate([np.ones(n), np.zeros(n)])[None], b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, None)] * n, method="highs")
    assert res.upper == pytest.approx(ref.fun, abs=1e-9)
    assert res.lower <= res.upper + 1e-12

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import dirac, measure_1d, random_measure
from wotlab.brenier_strassen import (
    check_rockafellar_strassen,
    cycle_sum,
    lipschitz_monotone_probe,
    map_uniqueness_probe,
    merge_atoms,
    solve_v2,
)
from wotlab.measures import DiscreteMeasure
from wotlab.orders import OrderWitness, check_convex_order


def _barycentric_brute_force(mu, nu):
    """min sum_i mu_i |x_i - T_i|^2 over couplings, by SLSQP restarts."""
    m, n = len(mu), len(nu)
    a, b = mu.weights, nu.weights
    cons = [{"type": "eq", "fun": lambda z: z.reshape(m, n).sum(axis=1) - a},
            {"type": "eq", "fun": lambda z: z.reshape(m, n).sum(axis=0)[:-1] - b[:-1]}]

    def f(z):
        P = z.reshape(m, n)
        T = (P @ nu.points) / a[:, None]
        return float(a @ np.sum((mu.points - T) ** 2, axis=1))

    rng = np.random.default_rng(0)
    best = np.inf
    for _ in range(5):
        z0 = (rng.dirichlet(np.ones(m * n)).reshape(m, n))
        z0 = np.outer(a, b) if best == np.inf else z0 / z0.sum()
        r = minimize(f, z0.ravel(), method="SLSQP", constraints=cons, bounds=[(0, None)] * (m * n),
                     options={"ftol": 1e-15, "maxiter": 1000})
        best = min(best, r.fun)
    return best


def test_small_examples():
    assert solve_v2(dirac([0.0]), measure_1d([-1.0, 1.0], [0.5, 0.5])).value == pytest.approx(0.0, abs=1e-14)
    s = solve_v2(dirac([0.0]), dirac([1.0]))
    assert s.value == pytest.approx(1.0)
    np.testing.assert_allclose(s.T, [[1.0]])
    # the spread of mu is contracted onto that of nu: T(-2) = -1, T(2) = 1
    s = solve_v2(measure_1d([-2.0, 2.0], [0.5, 0.5]), measure_1d([-1.0, 1.0], [0.5, 0.5]))
    assert s.value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(s.T[:, 0], [-1.0, 1.0], atol=1e-10)


def test_value_matches_brute_force():
    for seed in range(6):
        rng = np.random.default_rng(seed)
        d = 1 + seed % 2
        mu, nu = random_measure(rng, 3, d), random_measure(rng, 3, d)
        assert solve_v2(mu, nu).value == pytest.approx(_barycentric_brute_force(mu, nu), abs=1e-7)


def test_projection_structure():
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 6, 2, scale=2.0), random_measure(rng, 5, 2)
    s = solve_v2(mu, nu)
    assert isinstance(check_convex_order(s.eta_star, nu), OrderWitness)
    assert s.eta_star.weights.sum() == pytest.approx(1.0)
    # the barycenter map preserves the mean of nu
    np.testing.assert_allclose(mu.weights @ s.T, nu.mean(), atol=1e-10)
    assert s.w2_check <= 1e-6 * (1 + s.value)
    d = s.to_dict()
    assert set(d) == {"value", "map", "eta_star", "fw_gap", "w2_defect"}


def test_merge_atoms():
    m = merge_atoms([[0.0], [1e-12], [1.0]], [0.25, 0.25, 0.5])
    np.testing.assert_allclose(m.weights, [0.5, 0.5])
    assert len(merge_atoms([[0.0], [1e-6]], [0.5, 0.5])) == 2


@pytest.mark.parametrize("a, ok", [(0.5, True), (1.0, True), (2.0, False)])
def test_linear_gradient_graphs(a, ok):
    """y = a x is the gradient of a|x|^2/2, which is 1-smooth exactly when a <= 1."""
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 2))
    graph = [(x, a * x) for x in X]
    v = check_rockafellar_strassen(graph, L=1.0)
    assert v.pairwise_ok == ok and v.cycles_ok == ok
    # closed form of a cycle sum for y = a x
    cyc = (0, 3, 1, 5)
    dX = X[list(cyc[1:] + cyc[:1])] - X[list(cyc)]
    expected = 0.5 * (a * a - a) * np.sum(dX * dX)
    assert cycle_sum(X, a * X, cyc, 1.0) == pytest.approx(expected)


def test_rs_enumeration_counts():
    X = np.arange(5.0)[:, None]
    v = check_rockafellar_strassen([(x, 0.5 * x) for x in X], cycle_len=3)
    # C(5,2) * 1! + C(5,3) * 2!
    assert v.cycles_checked == 10 + 20
    big = check_rockafellar_strassen([(x, 0.5 * x) for x in np.arange(12.0)[:, None]], n_trials=37)
    assert big.cycles_checked == 37


def test_rs_input_validation():
    with pytest.raises(ValueError):
        check_rockafellar_strassen([], L=1.0)
    with pytest.raises(ValueError):
        check_rockafellar_strassen([(np.zeros(1), np.zeros(1))], L=0.0)


def test_lipschitz_probe():
    X = np.linspace(-1, 1, 5)[:, None]
    rep = lipschitz_monotone_probe([(x, 3 * x) for x in X])
    assert rep.single_valued and rep.lipschitz == pytest.approx(3.0)
    assert rep.monotonicity_defect > 0
    rep = lipschitz_monotone_probe([(np.zeros(1), np.zeros(1)), (np.zeros(1), np.ones(1))])
    assert not rep.single_valued


def test_map_uniqueness():
    rng = np.random.default_rng(5)
    mu, nu = random_measure(rng, 5, 2), random_measure(rng, 6, 2)
    assert map_uniqueness_probe(mu, nu, n_starts=3) <= 1e-6


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_v2(dirac([0.0]), dirac([0.0, 1.0]))


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_property_solution_is_rs_consistent(seed, d):
    rng = np.random.default_rng(seed)
    mu = random_measure(rng, int(rng.integers(1, 7)), d)
    nu = random_measure(rng, int(rng.integers(1, 7)), d)
    s = solve_v2(mu, nu)
    assert check_rockafellar_strassen(s.map_graph, L=1.0, tol=1e-6).passed
    assert lipschitz_monotone_probe(s.map_graph).lipschitz <= 1 + 1e-6
    # V2 is zero exactly when mu <=c nu
    assert (s.value <= 1e-8) == isinstance(check_convex_order(mu, nu), OrderWitness)


@given(st.integers(0, 10_000))
def test_property_dirac_value(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    x = rng.standard_normal(d)
    nu = random_measure(rng, int(rng.integers(1, 7)), d)
    assert solve_v2(dirac(x), nu).value == pytest.approx(float(np.sum((x - nu.mean()) ** 2)), abs=1e-10)


def test_scaling_covariance():
    """V2(s mu, s nu) = s^2 V2(mu, nu)."""
    rng = np.random.default_rng(6)
    mu, nu = random_measure(rng, 4, 2), random_measure(rng, 4, 2)
    v = solve_v2(mu, nu).value
    s = 3.0
    vs = solve_v2(DiscreteMeasure(s * mu.points, mu.weights), DiscreteMeasure(s * nu.points, nu.weights)).value
    assert vs == pytest.approx(s * s * v, rel=1e-8, abs=1e-12)

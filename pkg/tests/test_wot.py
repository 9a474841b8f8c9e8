import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import dirac, entropic_oracle, monopoly_l1_oracle, random_instance, random_measure
from wotlab.costs import Barycentric, Classical, CostModel, Entropic, MonopolyIcx
from wotlab.engines.fw import FWOptions
from wotlab.measures import DiscreteMeasure, validate_coupling
from wotlab.wot import (
    ConvergenceError,
    PropertyAError,
    dual_objective,
    duality_gap,
    legendre_transfer,
    primal_value,
    solve_dual,
    solve_primal,
    stability_probe,
    verify_transfer_representation,
)


def _ot_linprog(C, a, b):
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    return linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs").fun


def test_classical_matches_linprog():
    for seed in range(5):
        model, mu, nu = random_instance("classical", seed, max_atoms=10)
        sol = solve_primal(model, mu, nu)
        assert sol.method == "network_simplex"
        assert sol.value == pytest.approx(_ot_linprog(model.c, mu.weights, nu.weights), abs=1e-10)
        assert validate_coupling(sol.coupling).passed


def test_entropic_matches_dual_oracle():
    for seed in range(5):
        model, mu, nu = random_instance("entropic", seed, max_atoms=6)
        sol = solve_primal(model, mu, nu)
        ref = entropic_oracle(mu.weights[:, None] * model.gamma, mu.weights, nu.weights)
        assert sol.value == pytest.approx(ref, abs=1e-8)


def test_monopoly_l1_matches_lp():
    for seed in range(1, 12, 2):
        model, mu, nu = random_instance("monopoly", seed, max_atoms=8)
        assert model.theta.name == "l1"
        sol = solve_primal(model, mu, nu)
        ref = monopoly_l1_oracle(model.X, model.Y, mu.weights, nu.weights)
        assert sol.value == pytest.approx(ref, abs=1e-8)


def test_barycentric_dirac_source():
    rng = np.random.default_rng(0)
    for d in (1, 2, 3):
        x = rng.standard_normal(d)
        nu = random_measure(rng, 5, d)
        mu = dirac(x)
        sol = solve_primal(Barycentric(mu.points, nu.points), mu, nu)
        assert sol.value == pytest.approx(float(np.sum((x - nu.mean()) ** 2)), abs=1e-12)


def test_barycentric_zero_under_convex_order():
    # nu splits every atom of mu symmetrically
    rng = np.random.default_rng(1)
    mu = random_measure(rng, 4, 2)
    e = rng.standard_normal((4, 2))
    nu = DiscreteMeasure(np.vstack([mu.points + e, mu.points - e]), np.concatenate([mu.weights, mu.weights]) / 2)
    sol = solve_primal(Barycentric(mu.points, nu.points), mu, nu)
    assert sol.value <= 1e-12


@pytest.mark.parametrize("kind", ["classical", "barycentric", "entropic", "monopoly"])
def test_generic_frank_wolfe_agrees_with_family_engine(kind):
    model, mu, nu = random_instance(kind, 3, max_atoms=6)
    fast = solve_primal(model, mu, nu)
    fw = solve_primal(model, mu, nu, FWOptions(rel_tol=1e-9, max_iter=200000), method="frank_wolfe")
    assert fw.method == "frank_wolfe"
    assert fw.value >= fast.value - 1e-7 * (1 + abs(fast.value))
    assert fw.value - fast.value <= fw.fw_gap + 1e-9


@pytest.mark.parametrize("kind", ["classical", "barycentric", "entropic", "monopoly"])
def test_value_is_invariant_under_atom_permutation(kind):
    model, mu, nu = random_instance(kind, 4, max_atoms=8)
    base = solve_primal(model, mu, nu).value
    rng = np.random.default_rng(0)
    r, c = rng.permutation(len(mu)), rng.permutation(len(nu))
    mu2 = DiscreteMeasure(mu.points[r], mu.weights[r])
    nu2 = DiscreteMeasure(nu.points[c], nu.weights[c])
    perm = model.restrict(r, c)
    assert solve_primal(perm, mu2, nu2).value == pytest.approx(base, abs=1e-7 * (1 + abs(base)))


def test_primal_value_of_returned_coupling():
    model, mu, nu = random_instance("barycentric", 5, max_atoms=8)
    sol = solve_primal(model, mu, nu)
    assert primal_value(model, sol.coupling) == pytest.approx(sol.value, abs=1e-12)


def test_dual_certificate_and_gap():
    model, mu, nu = random_instance("barycentric", 6, max_atoms=8)
    sol = solve_primal(model, mu, nu)
    cert = solve_dual(model, mu, nu, solution=sol)
    rep = duality_gap(sol, cert)
    assert rep.passed and rep.gap >= -1e-9
    assert set(rep.to_dict()) == {"primal", "dual", "gap", "rel_gap", "passed"}
    # the cold start is still a valid lower bound
    cold = solve_dual(model, mu, nu, init="zero")
    assert cold.dual_value <= sol.value + 1e-9


def test_gap_rejects_foreign_certificate():
    m1, mu1, nu1 = random_instance("classical", 1, max_atoms=5)
    m2, mu2, nu2 = random_instance("classical", 2, max_atoms=5)
    sol = solve_primal(m1, mu1, nu1)
    cert = solve_dual(m2, mu2, nu2)
    with pytest.raises(ValueError, match="fingerprint"):
        duality_gap(sol, cert)
    with pytest.raises(ValueError):
        solve_dual(m2, mu2, nu2, solution=sol)


def test_legendre_transfer_classical_closed_form():
    rng = np.random.default_rng(2)
    C = rng.random((3, 4))
    g = rng.standard_normal(4)
    np.testing.assert_allclose(legendre_transfer(Classical(C), g), np.max(g[None, :] - C, axis=1), atol=1e-14)
    with pytest.raises(ValueError):
        legendre_transfer(Classical(C), [np.inf, 0, 0, 0])


def test_transfer_representation_details():
    model, mu, nu = random_instance("entropic", 7, max_atoms=6)
    v = verify_transfer_representation(model, mu, nu)
    assert v.passed
    assert v.details["transfer"] == pytest.approx(v.details["primal"], abs=1e-4)


class _ConcaveCost(CostModel):
    kind = "concave"

    def eval(self, i, p):
        r = self.X[i] - self._check_p(p) @ self.Y
        return -float(r @ r)


def test_property_A_gate():
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 3, 1), random_measure(rng, 3, 1)
    with pytest.raises(PropertyAError):
        solve_primal(_ConcaveCost(mu.points, nu.points), mu, nu)


def test_strict_nonconvergence():
    # the entropic optimum is interior, so one step from a vertex cannot reach it
    model, mu, nu = random_instance("entropic", 8, max_atoms=10)
    opts = FWOptions(max_iter=1, rel_tol=1e-14)
    sol = solve_primal(model, mu, nu, opts, method="frank_wolfe")
    assert not sol.converged and sol.fw_gap > 0
    with pytest.raises(ConvergenceError):
        solve_primal(model, mu, nu, opts, method="frank_wolfe", strict=True)


def test_shape_mismatch_and_unknown_method():
    model, mu, nu = random_instance("classical", 9, max_atoms=5)
    with pytest.raises(ValueError):
        solve_primal(model, nu, mu) if len(mu) != len(nu) else solve_primal(model, mu, dirac([0.0]))
    with pytest.raises(ValueError):
        solve_primal(model, mu, nu, method="ellipsoid")


def test_stability_probe_classical():
    model, mu, nu = random_instance("classical", 10, max_atoms=6)
    # |V(a, b) - V(a', b')| <= 2 max|c| * TV for classical transport
    rep = stability_probe(model, mu, nu, n_perturb=4, scale=1e-2, lipschitz=2 * np.abs(model.c).max())
    assert rep.max_downward_jump == 0.0
    assert len(rep.values) == 4 and all(d > 0 for d in rep.drifts)
    zero = stability_probe(model, mu, nu, n_perturb=2, scale=0.0)
    assert zero.values == pytest.approx([zero.base_value] * 2)


def test_to_dict_payloads():
    model, mu, nu = random_instance("classical", 11, max_atoms=4)
    sol = solve_primal(model, mu, nu)
    assert "coupling" not in sol.to_dict()
    assert np.allclose(sol.to_dict(emit_coupling=True)["coupling"], sol.coupling.mass)
    cert = solve_dual(model, mu, nu, solution=sol)
    assert len(cert.to_dict(emit_g=True)["g"]) == len(nu)


@given(st.integers(0, 10_000), st.sampled_from(["classical", "barycentric", "entropic", "monopoly"]))
def test_property_weak_duality_for_any_g(seed, kind):
    model, mu, nu = random_instance(kind, seed, max_atoms=5)
    sol = solve_primal(model, mu, nu, skip_property_check=True)
    g = np.random.default_rng(seed).standard_normal(len(nu))
    d, _ = dual_objective(model, mu, nu, g)
    assert d <= sol.value + 1e-9 * (1 + abs(sol.value))


@given(st.integers(0, 10_000))
def test_property_entropic_monotone_in_reference(seed):
    """Raising one reference entry lowers (weakly) the optimal value of the unnormalized cost."""
    rng = np.random.default_rng(seed)
    m, n = 2, 3
    G = rng.random((m, n)) + 0.1
    mu, nu = random_measure(rng, m, 1), random_measure(rng, n, 1)
    v1 = solve_primal(Entropic(G, mu.points, nu.points, normalize=False), mu, nu, skip_property_check=True).value
    G2 = G.copy()
    G2[rng.integers(m), rng.integers(n)] *= 2.0
    v2 = solve_primal(Entropic(G2, mu.points, nu.points, normalize=False), mu, nu, skip_property_check=True).value
    assert v2 <= v1 + 1e-9


@given(st.integers(0, 10_000))
def test_property_monopoly_dominated_by_barycentric_gap(seed):
    """l1 monopoly cost <= sqrt(d) * sqrt(barycentric cost) atomwise, hence in value by Jensen."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    mu, nu = random_measure(rng, 3, d), random_measure(rng, 3, d)
    vm = solve_primal(MonopolyIcx(mu.points, nu.points, "l1"), mu, nu, skip_property_check=True).value
    vb = solve_primal(Barycentric(mu.points, nu.points), mu, nu, skip_property_check=True).value
    assert vm <= np.sqrt(d) * np.sqrt(vb) + 1e-7

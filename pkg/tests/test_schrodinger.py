import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import entropic_oracle
from wotlab.measures import Coupling, DiscreteMeasure, validate_coupling
from wotlab.schrodinger import (
    ReferenceJoint,
    check_product_form,
    entropy_decomposition,
    improving_perturbation,
    pairwise_ratio_check,
    relative_entropy,
    sinkhorn,
)


def _instance(seed, m=3, n=4):
    rng = np.random.default_rng(seed)
    G = rng.random((m, n)) + 0.05
    return G / G.sum(), rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))


def test_relative_entropy_conventions():
    assert relative_entropy([0.5, 0.5, 0.0], [0.25, 0.25, 0.5]) == pytest.approx(np.log(2))
    assert relative_entropy([0.5, 0.5], [1.0, 0.0]) == np.inf
    assert relative_entropy([0.3, 0.7], [0.3, 0.7]) == 0.0


def test_sqrt6_instance():
    # the 2x2 optimum solves a^2 / (1/2 - a)^2 = (0.4 * 0.3) / (0.2 * 0.1)
    res = sinkhorn(ReferenceJoint([[0.4, 0.2], [0.1, 0.3]]), [0.5, 0.5], [0.5, 0.5])
    a = np.sqrt(6) / (2 * (1 + np.sqrt(6)))
    np.testing.assert_allclose(res.coupling.mass, [[a, 0.5 - a], [0.5 - a, a]], atol=1e-12)
    assert res.coupling.mass[0, 0] == pytest.approx(0.35505, abs=5e-6)


def test_sinkhorn_matches_independent_oracle():
    for seed in range(6):
        G, a, b = _instance(seed)
        res = sinkhorn(G, a, b, tol=1e-12)
        assert res.converged
        assert validate_coupling(res.coupling, tol=1e-11).passed
        assert res.value == pytest.approx(entropic_oracle(G, a, b), abs=1e-9)


def test_dual_trace_is_nondecreasing():
    G, a, b = _instance(7, 5, 6)
    res = sinkhorn(G, a, b)
    tr = res.dual_trace
    assert np.all(np.diff(tr) >= -1e-12)


def test_entropy_chain_rule():
    # any coupling whose mu is its exact first marginal
    G, _, _ = _instance(8)
    P = np.random.default_rng(8).dirichlet(np.ones(12)).reshape(3, 4)
    c = Coupling(DiscreteMeasure(np.zeros((3, 1)), P.sum(axis=1)), DiscreteMeasure(np.zeros((4, 1)), P.sum(axis=0)), P)
    total, rows, first = entropy_decomposition(c, ReferenceJoint(G))
    assert total == pytest.approx(rows + first, abs=1e-12)


def test_product_form_detects_a_perturbed_plan():
    G, a, b = _instance(9)
    res = sinkhorn(G, a, b)
    good = check_product_form(res.coupling, G)
    assert good.passed
    # the fitted factors reproduce the plan
    np.testing.assert_allclose(G * np.outer(good.f, good.g), res.coupling.mass, rtol=1e-9)
    P = res.coupling.mass.copy()
    eps = 1e-3
    P[0, 0] += eps
    P[0, 1] -= eps
    P[1, 0] -= eps
    P[1, 1] += eps
    bad = Coupling(res.coupling.mu, res.coupling.nu, P)
    assert not check_product_form(bad, G).passed
    assert not pairwise_ratio_check(bad, G).passed


def test_pairwise_ratio_alpha_values():
    G, a, b = _instance(10)
    res = sinkhorn(G, a, b)
    v = pairwise_ratio_check(res.coupling, G)
    assert v.passed
    K = res.coupling.kernel().rows
    rows = ReferenceJoint(G).rows
    for (x, z), alpha in v.details["alpha"].items():
        np.testing.assert_allclose((K[x] / rows[x]) / (K[z] / rows[z]), alpha, rtol=1e-9)


def test_support_mismatch():
    mu = DiscreteMeasure.uniform([[0.0], [1.0]])
    nu = DiscreteMeasure.uniform([[0.0], [1.0]])
    c = Coupling(mu, nu, [[0.5, 0.0], [0.25, 0.25]])
    v = pairwise_ratio_check(c, np.full((2, 2), 0.25))
    assert not v.passed and v.reason == "support mismatch"


def test_perturbation_known_case():
    g = np.array([0.5, 0.5])
    pert = improving_perturbation([0.9, 0.1], [0.1, 0.9], g, g)
    # optimum equalizes both rows at (1/2, 1/2)
    np.testing.assert_allclose(pert.q1, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(pert.q2, [0.5, 0.5], atol=1e-12)
    assert pert.decrease == pytest.approx(2 * relative_entropy([0.9, 0.1], g))
    assert improving_perturbation([0.3, 0.7], [0.3, 0.7], g, g) is None


def test_perturbation_rejects_zero_entries():
    with pytest.raises(ValueError):
        improving_perturbation([1.0, 0.0], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5])


def test_reference_validation():
    with pytest.raises(ValueError):
        ReferenceJoint([[0.0, 1.0]])
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), [0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 2)), [0.5, 0.5], [0.5, 0.5], tol=0.0)


def test_nonconvergence_is_flagged():
    G, a, b = _instance(11, 6, 6)
    res = sinkhorn(G, a, b, tol=1e-14, max_iter=1)
    assert not res.converged and res.iterations == 1


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
def test_property_sinkhorn_product_form(seed, m, n):
    G, a, b = _instance(seed, m, n)
    res = sinkhorn(G, a, b)
    assert check_product_form(res.coupling, G, tol=1e-8).passed
    assert pairwise_ratio_check(res.coupling, G, tol=1e-8).passed


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_property_perturbation_decreases_entropy(seed, n):
    rng = np.random.default_rng(seed)
    p1, p2, g1, g2 = (rng.dirichlet(np.ones(n)) + 1e-3 for _ in range(4))
    p1, p2, g1, g2 = (v / v.sum() for v in (p1, p2, g1, g2))
    pert = improving_perturbation(p1, p2, g1, g2)
    if pert is None:
        return
    np.testing.assert_allclose(pert.q1 + pert.q2, p1 + p2, atol=1e-15)
    assert pert.q1.min() >= 0 and pert.q2.min() >= 0
    before = relative_entropy(p1, g1) + relative_entropy(p2, g2)
    after = relative_entropy(pert.q1, g1) + relative_entropy(pert.q2, g2)
    assert pert.decrease > 0
    assert after == pytest.approx(before - pert.decrease, abs=1e-12)

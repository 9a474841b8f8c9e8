import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dirac, measure_1d, random_measure
from wotlab.measures import DiscreteMeasure
from wotlab.orders import (
    OrderCertificate,
    OrderInconclusive,
    OrderWitness,
    certificate_margin,
    check_convex_order,
    check_icx_order,
    potential_function_cx_1d,
    validate_witness,
)


def _stop_loss_icx_1d(mu, nu, tol=1e-10):
    """mu <=icx nu on the line iff E(X - k)^+ <= E(Y - k)^+ at every support point k."""
    x, y = mu.points[:, 0], nu.points[:, 0]
    return all(mu.weights @ np.maximum(x - k, 0) <= nu.weights @ np.maximum(y - k, 0) + tol
               for k in np.concatenate([x, y, [min(x.min(), y.min()) - 1]]))


def _random_1d(rng, ordered):
    m = int(rng.integers(1, 6))
    mu = measure_1d(np.round(rng.standard_normal(m), 3), rng.dirichlet(np.ones(m)))
    if not ordered:
        n = int(rng.integers(1, 6))
        return mu, measure_1d(np.round(rng.standard_normal(n), 3), rng.dirichlet(np.ones(n)))
    # spread each atom around itself without moving its mean
    pts, ws = [], []
    for x, w in zip(mu.points[:, 0], mu.weights):
        s = round(float(rng.random()), 3)
        pts += [x - s, x + s]
        ws += [w / 2, w / 2]
    return mu, measure_1d(pts, ws)


def _check_outcome(res, mu, nu, kind):
    if isinstance(res, OrderWitness):
        marg, drift = validate_witness(res.coupling, kind)
        assert marg <= 1e-8 and drift <= 1e-8
    elif isinstance(res, OrderCertificate):
        assert res.margin > 1e-8
        assert certificate_margin(res, mu, nu) == pytest.approx(res.margin, abs=1e-12)
        if kind == "submartingale":
            assert np.all(res.slopes >= 0)


@pytest.mark.parametrize("seed", range(30))
def test_convex_order_matches_potential_functions(seed):
    rng = np.random.default_rng(seed)
    mu, nu = _random_1d(rng, ordered=seed % 2 == 0)
    res = check_convex_order(mu, nu)
    assert not isinstance(res, OrderInconclusive)
    assert res.holds == potential_function_cx_1d(mu, nu)
    _check_outcome(res, mu, nu, "martingale")


@pytest.mark.parametrize("seed", range(30))
def test_icx_order_matches_stop_loss(seed):
    rng = np.random.default_rng(100 + seed)
    mu, nu = _random_1d(rng, ordered=seed % 3 == 0)
    if seed % 3 == 1:
        nu = DiscreteMeasure(nu.points + 1.0, nu.weights)
    res = check_icx_order(mu, nu)
    assert not isinstance(res, OrderInconclusive)
    assert res.holds == _stop_loss_icx_1d(mu, nu)
    _check_outcome(res, mu, nu, "submartingale")


def test_multidimensional_witness_and_certificate():
    rng = np.random.default_rng(0)
    mu = random_measure(rng, 4, 3)
    e = rng.standard_normal((4, 3))
    nu = DiscreteMeasure(np.vstack([mu.points + e, mu.points - e]), np.concatenate([mu.weights, mu.weights]) / 2)
    res = check_convex_order(mu, nu)
    assert isinstance(res, OrderWitness)
    # reversed direction: nu is more spread out, so a convex function separates
    back = check_convex_order(nu, mu)
    assert isinstance(back, OrderCertificate)
    _check_outcome(back, nu, mu, "martingale")
    # a convex function is at least as large at the mean
    assert back(nu.mean()) <= nu.weights @ back.evaluate(nu.points) + 1e-12


def test_mean_shift_breaks_convex_order_but_not_icx():
    mu = measure_1d([0.0, 1.0], [0.5, 0.5])
    nu = DiscreteMeasure(mu.points + 0.5, mu.weights)
    assert isinstance(check_convex_order(mu, nu), OrderCertificate)
    assert isinstance(check_icx_order(mu, nu), OrderWitness)
    assert isinstance(check_icx_order(nu, mu), OrderCertificate)


def test_dirac_at_the_mean_is_smallest():
    rng = np.random.default_rng(1)
    nu = random_measure(rng, 5, 2)
    assert isinstance(check_convex_order(dirac(nu.mean()), nu), OrderWitness)
    assert isinstance(check_convex_order(dirac(nu.mean() + 0.1), nu), OrderCertificate)


def test_serialization():
    mu = measure_1d([0.0], [1.0])
    nu = measure_1d([-1.0, 1.0], [0.5, 0.5])
    w = check_convex_order(mu, nu).to_dict("cx")
    assert w["holds"] is True and w["witness"]["kind"] == "martingale"
    c = check_convex_order(nu, mu).to_dict("cx")
    assert c["holds"] is False and c["certificate"]["margin"] > 0
    assert OrderInconclusive("x").to_dict("cx")["holds"] == "inconclusive"


def test_potential_function_requires_1d():
    with pytest.raises(ValueError):
        potential_function_cx_1d(random_measure(np.random.default_rng(0), 2, 2), dirac([0.0, 0.0]))


@given(st.integers(0, 10_000), st.booleans())
def test_property_convex_order_decision(seed, ordered):
    mu, nu = _random_1d(np.random.default_rng(seed), ordered)
    res = check_convex_order(mu, nu)
    if not isinstance(res, OrderInconclusive):
        assert res.holds == potential_function_cx_1d(mu, nu)
        _check_outcome(res, mu, nu, "martingale")
    if ordered:
        assert isinstance(res, OrderWitness)

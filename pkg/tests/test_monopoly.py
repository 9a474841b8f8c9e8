import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import measure_1d, monopoly_l1_oracle
from wotlab.costs import Theta
from wotlab.measures import DiscreteMeasure
from wotlab.monopoly import (
    MonopolyProblem,
    compare_four,
    default_grid,
    hat_theta,
    solve_form_i,
    solve_form_ii,
    solve_form_iii,
    solve_form_iv,
    solve_kr_dual,
)


def _stop_loss_kr(mu, nu):
    """In 1D the extreme increasing convex 1-Lipschitz functions are the calls (x - k)^+."""
    x, y = mu.points[:, 0], nu.points[:, 0]
    ks = np.concatenate([x, y, [min(x.min(), y.min()) - 1.0]])
    best = max(mu.weights @ np.maximum(x - k, 0) - nu.weights @ np.maximum(y - k, 0) for k in ks)
    return max(best, 0.0)


def _random_1d(rng, m=3, n=3):
    return (measure_1d(np.round(rng.uniform(-1, 1, m), 2), rng.dirichlet(np.ones(m))),
            measure_1d(np.round(rng.uniform(-1, 1, n), 2), rng.dirichlet(np.ones(n))))


def test_small_examples():
    one, zero = measure_1d([1.0], [1.0]), measure_1d([0.0], [1.0])
    sq = Theta("custom", lambda z: z * z)
    assert solve_form_i(MonopolyProblem(sq, one, zero)) == pytest.approx(1.0, abs=1e-8)
    assert solve_form_iv(MonopolyProblem(sq, one, zero))[0] == pytest.approx(1.0, abs=1e-8)
    # moving mass up costs nothing under the increasing order
    assert solve_form_i(MonopolyProblem("l1", zero, one)) == pytest.approx(0.0, abs=1e-10)
    assert solve_kr_dual(one, zero)[0] == pytest.approx(1.0)


def test_hat_theta():
    assert hat_theta("l1", [-1.0, 2.0]) == pytest.approx(2.0)
    assert hat_theta("l2", [3.0, 4.0]) == pytest.approx(5.0)
    assert hat_theta("l2", [-3.0, -4.0]) == 0.0
    # (z - 1)^2 is minimized at z = 1, so hat(u) = max(u - 1, 0)^2
    sq = lambda z: (z - 1.0) ** 2
    for u in (-2.0, 0.5, 1.0, 2.5):
        val, bound = hat_theta(sq, u, with_bound=True)
        assert abs(val - max(u - 1.0, 0.0) ** 2) <= bound + 1e-12
    with pytest.raises(ValueError):
        hat_theta(sq, [0.0, 1.0])


def test_form_i_matches_lp_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        mu, nu = _random_1d(rng)
        ref = monopoly_l1_oracle(mu.points, nu.points, mu.weights, nu.weights)
        assert solve_form_i(MonopolyProblem("l1", mu, nu)) == pytest.approx(ref, abs=1e-8)


def test_kr_dual_matches_stop_loss():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mu, nu = _random_1d(rng, 4, 3)
        val, phi = solve_kr_dual(mu, nu)
        assert val == pytest.approx(_stop_loss_kr(mu, nu), abs=1e-10)
        assert np.all(np.diff(phi) >= -1e-12)
        assert np.all(np.diff(phi) / np.diff(default_grid(mu, nu)) <= 1 + 1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_four_forms_agree_l1(seed):
    mu, nu = _random_1d(np.random.default_rng(10 + seed))
    prob = MonopolyProblem("l1", mu, nu)
    four = compare_four(prob)
    assert four.passed, four.to_dict()
    assert four.v4 == pytest.approx(solve_kr_dual(mu, nu)[0], abs=1e-8)


def test_four_forms_agree_custom_theta():
    mu = measure_1d([0.0, 1.0, 2.0], [0.3, 0.4, 0.3])
    nu = measure_1d([0.0, 1.0], [0.5, 0.5])
    four = compare_four(MonopolyProblem(lambda z: z * z + 0.5 * abs(z), mu, nu), tol=5e-3)
    assert four.passed, four.to_dict()


def test_refinement_brackets_the_value():
    """ii and iii can only decrease as the grid refines and iv can only increase."""
    mu = measure_1d([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
    nu = measure_1d([0.5, 2.0], [0.6, 0.4])
    sq = lambda z: z * z
    coarse = MonopolyProblem(sq, mu, nu)
    fine = coarse.refined()
    assert fine.grid.size == 2 * coarse.grid.size - 1
    assert solve_form_ii(fine) <= solve_form_ii(coarse) + 1e-9
    assert solve_form_iii(fine) <= solve_form_iii(coarse) + 1e-9
    assert solve_form_iv(fine)[0] >= solve_form_iv(coarse)[0] - 1e-9
    # the weak transport value sits between the grid bounds
    exact = solve_form_i(coarse)
    for prob in (coarse, fine):
        assert solve_form_iv(prob)[0] <= exact + 1e-9 <= solve_form_ii(prob) + 2e-9


def test_grid_validation():
    mu, nu = measure_1d([0.0], [1.0]), measure_1d([1.0], [1.0])
    with pytest.raises(ValueError, match="increasing"):
        MonopolyProblem("l1", mu, nu, [0.0, 1.0, 0.5])
    with pytest.raises(ValueError, match="supports"):
        MonopolyProblem("l1", mu, nu, [0.0, 0.5])
    with pytest.raises(ValueError, match="convex"):
        MonopolyProblem(lambda z: -z * z, mu, nu)
    with pytest.raises(ValueError, match="dimension"):
        MonopolyProblem("l1", mu, DiscreteMeasure([[0.0, 1.0]], [1.0]))


def test_higher_dimensions_only_form_i():
    rng = np.random.default_rng(2)
    mu = DiscreteMeasure(rng.random((3, 2)), rng.dirichlet(np.ones(3)))
    nu = DiscreteMeasure(rng.random((2, 2)), rng.dirichlet(np.ones(2)))
    prob = MonopolyProblem("l1", mu, nu)
    ref = monopoly_l1_oracle(mu.points, nu.points, mu.weights, nu.weights)
    assert solve_form_i(prob) == pytest.approx(ref, abs=1e-8)
    with pytest.raises(ValueError):
        solve_form_ii(prob)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_property_kr_and_form_iv(seed):
    mu, nu = _random_1d(np.random.default_rng(seed), 3, 2)
    kr = solve_kr_dual(mu, nu)[0]
    assert kr == pytest.approx(_stop_loss_kr(mu, nu), abs=1e-9)
    assert solve_form_iv(MonopolyProblem("l1", mu, nu))[0] == pytest.approx(kr, abs=1e-8)

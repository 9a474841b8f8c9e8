import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.optimize import linprog, minimize, minimize_scalar

from wotlab.costs import Barycentric, Classical, Entropic, MonopolyIcx
from wotlab.measures import DiscreteMeasure

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SESSION_START = [time.perf_counter()]
ACCEPTANCE_LINES = []

FAMILIES = ("classical", "barycentric", "entropic", "monopoly")


def random_measure(rng, n, d, scale=1.0):
    return DiscreteMeasure(scale * rng.standard_normal((n, d)), rng.dirichlet(np.ones(n)))


def random_instance(kind, seed, max_atoms=20, max_dim=3):
    """Seeded instance of one cost family: ``(model, mu, nu)``.

    Monopoly instances alternate between the l1 and l2 norms by seed.
    """
    rng = np.random.default_rng([seed, FAMILIES.index(kind)])
    m, n = (int(v) for v in rng.integers(2, max_atoms + 1, size=2))
    d = int(rng.integers(1, max_dim + 1))
    mu = random_measure(rng, m, d)
    nu = random_measure(rng, n, d)
    if kind == "classical":
        model = Classical(rng.random((m, n)), mu.points, nu.points)
    elif kind == "barycentric":
        model = Barycentric(mu.points, nu.points)
    elif kind == "entropic":
        model = Entropic(rng.random((m, n)) + 0.05, mu.points, nu.points)
    else:
        model = MonopolyIcx(mu.points, nu.points, "l1" if seed % 2 else "l2")
    return model, mu, nu


def dirac(x):
    return DiscreteMeasure.dirac(np.atleast_1d(np.asarray(x, dtype=float)))


def measure_1d(points, weights):
    return DiscreteMeasure(np.asarray(points, dtype=float)[:, None], np.asarray(weights, dtype=float))


def entropic_oracle(G, a, b):
    """min H(pi|G) over couplings of (a, b), independently of Sinkhorn.

    2x2: bounded scalar search over pi_11.  Larger: BFGS on the smooth
    concave dual ``a.u + b.v - sum G exp(u_i + v_j - 1)``, whose optimum
    equals the primal value.
    """
    m, n = G.shape
    if m == 2 and n == 2:
        def f(t):
            P = np.array([[t, a[0] - t], [b[0] - t, b[1] - a[0] + t]])
            P = np.maximum(P, 1e-300)
            return float(np.sum(P * (np.log(P) - np.log(G))))

        lo = max(0.0, a[0] - b[1])
        hi = min(a[0], b[0])
        return float(minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}).fun)

    def neg_dual(z):
        u, v = z[:m], z[m:]
        P = G * np.exp(u[:, None] + v[None, :] - 1.0)
        val = a @ u + b @ v - P.sum()
        grad = np.concatenate([a - P.sum(axis=1), b - P.sum(axis=0)])
        return -val, -grad

    r = minimize(neg_dual, np.zeros(m + n), jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": 10000})
    return float(-r.fun)


def monopoly_l1_oracle(X, Y, a, b):
    """Exact l1 monopoly optimum as one LP through HiGHS.

    min sum_i a_i sum_k t_ik  s.t.  t_ik >= x_ik - (P Y)_ik / a_i,  t >= 0,
    P a coupling of (a, b).
    """
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    m, n, d = X.shape[0], Y.shape[0], X.shape[1]
    nv = m * n + m * d
    c = np.concatenate([np.zeros(m * n), np.repeat(a, d)])
    A_eq = np.zeros((m + n, nv))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j:m * n:n] = 1.0
    A_ub = np.zeros((m * d, nv))
    b_ub = np.zeros(m * d)
    for i in range(m):
        for k in range(d):
            r = i * d + k
            A_ub[r, i * n:(i + 1) * n] = -Y[:, k] / a[i]
            A_ub[r, m * n + r] = -1.0
            b_ub[r] = -X[i, k]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    return float(res.fun)


def record_acceptance(number, passed, detail):
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_sessionstart(session):
    SESSION_START[0] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    # the runtime criterion measures the whole session, so it runs last
    last = [it for it in items if it.name == "test_criterion_10_suite_runtime"]
    for it in last:
        items.remove(it)
        items.append(it)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

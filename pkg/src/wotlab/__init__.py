"""Discrete weak optimal transport.

Primal and dual solvers for ``inf_pi sum_i mu_i C(x_i, pi_i)`` over four
cost families, with certificates: duality gaps, C-monotonicity checks,
convex-order witnesses, the Schroedinger product form, the barycentric
projection onto the convex-order lower set, and the monopoly value.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .costs import (  # noqa: E402
    Barycentric,
    Classical,
    CostModel,
    Entropic,
    MonopolyIcx,
    Theta,
    build_cost,
    check_property_A,
)
from .measures import (  # noqa: E402
    Coupling,
    DiscreteMeasure,
    Problem,
    SchemaError,
    Verdict,
    load_measure,
    load_problem,
    validate_coupling,
)
from .monotonicity import PairSet, check_c_monotone, check_cyclical_monotone, redistribute_optimal  # noqa: E402
from .orders import OrderCertificate, OrderWitness, check_convex_order, check_icx_order  # noqa: E402
from .wot import (  # noqa: E402
    DualCertificate,
    Solution,
    duality_gap,
    legendre_transfer,
    solve_dual,
    solve_primal,
    verify_transfer_representation,
)

__all__ = [
    "__version__",
    "BACKEND",
    "Barycentric",
    "Classical",
    "CostModel",
    "Entropic",
    "MonopolyIcx",
    "Theta",
    "build_cost",
    "check_property_A",
    "Coupling",
    "DiscreteMeasure",
    "Problem",
    "SchemaError",
    "Verdict",
    "load_measure",
    "load_problem",
    "validate_coupling",
    "PairSet",
    "check_c_monotone",
    "check_cyclical_monotone",
    "redistribute_optimal",
    "OrderCertificate",
    "OrderWitness",
    "check_convex_order",
    "check_icx_order",
    "DualCertificate",
    "Solution",
    "duality_gap",
    "legendre_transfer",
    "solve_dual",
    "solve_primal",
    "verify_transfer_representation",
]

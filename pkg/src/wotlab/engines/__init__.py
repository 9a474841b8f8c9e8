"""Optimization primitives: dense LP, transport LMO, Frank-Wolfe, ascent, cutting planes."""

from .ascent import AscentOptions, AscentResult, concave_ascent
from .cutting_plane import KelleyResult, kelley
from .fw import FWOptions, FWResult, NonFiniteOracleError, frank_wolfe, min_norm_point, simplex_pairwise_fw
from .lp import (
    CyclingError,
    FarkasRay,
    LinearProgram,
    LPSizeError,
    LPSolution,
    farkas_certificate,
    simplex_solve,
)
from .transport import LMOResult, transport_lmo, transport_plan

__all__ = [
    "AscentOptions",
    "AscentResult",
    "concave_ascent",
    "KelleyResult",
    "kelley",
    "FWOptions",
    "FWResult",
    "NonFiniteOracleError",
    "frank_wolfe",
    "min_norm_point",
    "simplex_pairwise_fw",
    "CyclingError",
    "FarkasRay",
    "LinearProgram",
    "LPSizeError",
    "LPSolution",
    "farkas_certificate",
    "simplex_solve",
    "LMOResult",
    "transport_lmo",
    "transport_plan",
]

"""Mixed-integer convex programs with an embedded branch-and-bound solver."""

from .model import (
    BINARY,
    CONTINUOUS,
    EQ,
    FEASIBILITY_TOL,
    GE,
    INTEGRALITY_TOL,
    LE,
    LinearConstraint,
    MipModel,
    MipSolution,
    Objective,
    Variable,
    validate,
)
from .mps import dump_mps, write_mps
from .relaxation import KKT_TOL, RelaxationEngine, RelaxationResult, solve_relaxation
from .solver import DEFAULT_REL_GAP, SolveLimits, solve

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "DEFAULT_REL_GAP",
    "EQ",
    "FEASIBILITY_TOL",
    "GE",
    "INTEGRALITY_TOL",
    "KKT_TOL",
    "LE",
    "LinearConstraint",
    "MipModel",
    "MipSolution",
    "Objective",
    "RelaxationEngine",
    "RelaxationResult",
    "SolveLimits",
    "Variable",
    "dump_mps",
    "solve",
    "solve_relaxation",
    "validate",
    "write_mps",
]

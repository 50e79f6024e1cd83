"""Declarative mixed-integer convex programs.

A model owns continuous and binary variables, linear constraints and a
minimization objective whose quadratic part is assembled exclusively from
weighted squares of affine expressions, which keeps it positive semidefinite
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="
_RELATIONS = (LE, EQ, GE)


@dataclass(frozen=True)
class Variable:
    index: int
    kind: str
    lower: float
    upper: float
    name: str = ""

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.kind == BINARY and (self.lower, self.upper) != (0.0, 1.0):
            raise ValueError("binary variables must have bounds [0, 1]")
        if self.lower > self.upper:
            raise ValueError(f"empty bound interval for variable {self.name or self.index}")


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float
    name: str = ""

    def __post_init__(self):
        if self.relation not in _RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if not self.coeffs or all(c == 0.0 for _, c in self.coeffs):
            raise ValueError(f"constraint {self.name!r} has no nonzero coefficient")

    def activity(self, values: np.ndarray) -> float:
        return float(sum(c * values[v] for v, c in self.coeffs))

    def violation(self, values: np.ndarray) -> float:
        """Positive amount by which the row is violated (0 if satisfied)."""
        act = self.activity(values)
        if self.relation == LE:
            return max(0.0, act - self.rhs)
        if self.relation == GE:
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)


class Objective:
    """Minimization objective: linear terms plus a sum of squared affine terms."""

    def __init__(self):
        self.linear: dict[int, float] = {}
        self.quadratic: dict[tuple[int, int], float] = {}
        self.constant: float = 0.0
        self._squared_terms: list[tuple[tuple[tuple[int, float], ...], float, float]] = []

    def add_linear(self, var: int, coeff: float) -> None:
        if coeff != 0.0:
            self.linear[var] = self.linear.get(var, 0.0) + float(coeff)

    def add_squared(self, coeffs, constant: float = 0.0, weight: float = 1.0) -> None:
        """Add ``weight * (sum coeff_i x_i + constant)^2``; weight must be >= 0."""
        if weight < 0:
            raise ValueError("squared terms need a nonnegative weight")
        if weight == 0.0:
            return
        terms = tuple((int(v), float(c)) for v, c in coeffs if c != 0.0)
        self._squared_terms.append((terms, float(constant), float(weight)))
        for i, (vi, ci) in enumerate(terms):
            for vj, cj in terms[i:]:
                a, b = (vi, vj) if vi <= vj else (vj, vi)
                contrib = weight * ci * cj * (1.0 if vi == vj else 2.0)
                self.quadratic[(a, b)] = self.quadratic.get((a, b), 0.0) + contrib
        if constant != 0.0:
            for v, c in terms:
                self.add_linear(v, 2.0 * weight * constant * c)
            self.constant += weight * constant * constant

    @property
    def is_linear(self) -> bool:
        return not self.quadratic

    def value(self, values: np.ndarray) -> float:
        total = self.constant
        for v, c in self.linear.items():
            total += c * values[v]
        for (i, j), c in self.quadratic.items():
            total += c * values[i] * values[j] if i != j else c * values[i] ** 2
        return float(total)


class MipModel:
    """Variables, linear constraints and one minimization objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[LinearConstraint] = []
        self.objective = Objective()

    # -- construction -------------------------------------------------------

    def add_continuous(self, lower: float = -math.inf, upper: float = math.inf,
                       name: str = "") -> int:
        var = Variable(len(self.variables), CONTINUOUS, float(lower), float(upper), name)
        self.variables.append(var)
        return var.index

    def add_binary(self, name: str = "") -> int:
        var = Variable(len(self.variables), BINARY, 0.0, 1.0, name)
        self.variables.append(var)
        return var.index

    def add_constraint(self, coeffs, relation: str, rhs: float, name: str = "") -> LinearConstraint:
        merged: dict[int, float] = {}
        for var, coeff in coeffs:
            var = int(var)
            if not 0 <= var < len(self.variables):
                raise ValueError(f"constraint {name!r} references unknown variable {var}")
            merged[var] = merged.get(var, 0.0) + float(coeff)
        row = LinearConstraint(tuple(sorted(merged.items())), relation, float(rhs), name)
        self.constraints.append(row)
        return row

    # -- views ---------------------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def binary_indices(self) -> list[int]:
        return [v.index for v in self.variables if v.kind == BINARY]

    @property
    def num_binaries(self) -> int:
        return sum(1 for v in self.variables if v.kind == BINARY)

    def objective_value(self, values) -> float:
        vals = np.asarray(values, dtype=float)
        for (i, j) in self.objective.quadratic:
            if j >= len(vals):
                raise ValueError("objective references unknown variable")
        return self.objective.value(vals)


def validate(model: MipModel, values, tol: float = FEASIBILITY_TOL) -> list[LinearConstraint]:
    """Constraint rows violated beyond ``tol`` at the given point."""
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.shape[0] != model.num_variables:
        raise ValueError(
            f"expected {model.num_variables} values, got {vals.shape[0]}"
        )
    return [row for row in model.constraints if row.violation(vals) > tol]


@dataclass
class MipSolution:
    """Solver output: status, values (if any) and search statistics."""

    status: str  # "optimal" | "infeasible" | "time_limit"
    values: np.ndarray | None
    objective: float | None
    nodes_explored: int
    wall_time: float
    best_bound: float = -math.inf
    gap: float = math.inf
    heuristic_solves: int = 0

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    def value(self, var: int) -> float:
        if self.values is None:
            raise ValueError("solution carries no values")
        return float(self.values[var])

"""Continuous-relaxation engine shared by every node of the tree search.

One contract covers both problem classes: linear programs go to HiGHS via
scipy, convex quadratic programs go to the Clarabel interior-point solver.
Binaries are relaxed to [0, 1]; callers may pin any subset to fixed values.
Both backends are deterministic in their single-threaded configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import BINARY, EQ, GE, LE, MipModel

# Target KKT accuracy of relaxation solves; backends are configured tighter.
KKT_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-8,
    "dual_feasibility_tolerance": 1e-8,
}


@dataclass
class RelaxationResult:
    status: str
    x: np.ndarray | None
    objective: float | None


class RelaxationEngine:
    """Model compiled to sparse arrays for repeated relaxation solves."""

    def __init__(self, model: MipModel):
        self.model = model
        n = model.num_variables
        self.n = n
        lower = np.empty(n)
        upper = np.empty(n)
        for var in model.variables:
            lower[var.index] = var.lower
            upper[var.index] = var.upper
        self.lower = lower
        self.upper = upper

        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for row in model.constraints:
            idx = [v for v, _ in row.coeffs]
            val = [c for _, c in row.coeffs]
            if row.relation == LE:
                ub_rows.append((idx, val))
                ub_rhs.append(row.rhs)
            elif row.relation == GE:
                ub_rows.append((idx, [-c for c in val]))
                ub_rhs.append(-row.rhs)
            else:
                eq_rows.append((idx, val))
                eq_rhs.append(row.rhs)
        self.a_ub = _build_sparse(ub_rows, n)
        self.b_ub = np.array(ub_rhs)
        self.a_eq = _build_sparse(eq_rows, n)
        self.b_eq = np.array(eq_rhs)

        obj = model.objective
        self.q = np.zeros(n)
        for v, c in obj.linear.items():
            self.q[v] = c
        self.is_lp = obj.is_linear
        if not self.is_lp:
            rows, cols, vals = [], [], []
            for (i, j), c in obj.quadratic.items():
                rows.append(i)
                cols.append(j)
                vals.append(2.0 * c if i == j else c)
            self.p_upper = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))

    # -- public API ----------------------------------------------------------

    def solve(self, fixed=None) -> RelaxationResult:
        """Solve the relaxation with the given binaries pinned to values."""
        lower = self.lower
        upper = self.upper
        if fixed:
            lower = lower.copy()
            upper = upper.copy()
            for var, value in fixed.items():
                value = float(value)
                if value < self.lower[var] - 1e-12 or value > self.upper[var] + 1e-12:
                    return RelaxationResult(INFEASIBLE, None, None)
                lower[var] = value
                upper[var] = value
        if self.is_lp:
            return self._solve_lp(lower, upper)
        return self._solve_qp(lower, upper)

    # -- backends -------------------------------------------------------------

    def _solve_lp(self, lower, upper) -> RelaxationResult:
        res = linprog(
            self.q,
            A_ub=self.a_ub if self.a_ub.shape[0] else None,
            b_ub=self.b_ub if self.b_ub.size else None,
            A_eq=self.a_eq if self.a_eq.shape[0] else None,
            b_eq=self.b_eq if self.b_eq.size else None,
            bounds=np.column_stack([lower, upper]),
            method="highs",
            options=_HIGHS_OPTIONS,
        )
        if res.status == 0:
            x = np.asarray(res.x)
            return RelaxationResult(OPTIMAL, x, self.model.objective.value(x))
        if res.status == 2:
            return RelaxationResult(INFEASIBLE, None, None)
        if res.status == 3:
            return RelaxationResult(UNBOUNDED, None, None)
        raise RuntimeError(f"LP relaxation failed: {res.message}")

    def _solve_qp(self, lower, upper) -> RelaxationResult:
        import clarabel

        n = self.n
        blocks = []
        rhs_parts = []
        n_eq = self.a_eq.shape[0]
        if n_eq:
            blocks.append(self.a_eq)
            rhs_parts.append(self.b_eq)
        # Pinned variables join the zero cone for better conditioning.
        pinned = np.flatnonzero(lower == upper)
        if pinned.size:
            pin_mat = sp.csr_matrix(
                (np.ones(pinned.size), (np.arange(pinned.size), pinned)), shape=(pinned.size, n)
            )
            blocks.append(pin_mat)
            rhs_parts.append(lower[pinned])
        n_zero = n_eq + pinned.size

        ineq_blocks = []
        ineq_rhs = []
        if self.a_ub.shape[0]:
            ineq_blocks.append(self.a_ub)
            ineq_rhs.append(self.b_ub)
        free = np.flatnonzero(lower != upper)
        fin_up = free[np.isfinite(upper[free])]
        if fin_up.size:
            ineq_blocks.append(sp.csr_matrix(
                (np.ones(fin_up.size), (np.arange(fin_up.size), fin_up)), shape=(fin_up.size, n)))
            ineq_rhs.append(upper[fin_up])
        fin_lo = free[np.isfinite(lower[free])]
        if fin_lo.size:
            ineq_blocks.append(sp.csr_matrix(
                (-np.ones(fin_lo.size), (np.arange(fin_lo.size), fin_lo)), shape=(fin_lo.size, n)))
            ineq_rhs.append(-lower[fin_lo])
        blocks.extend(ineq_blocks)
        rhs_parts.extend(ineq_rhs)
        n_nonneg = sum(b.shape[0] for b in ineq_blocks)

        a_all = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
        b_all = np.concatenate(rhs_parts) if rhs_parts else np.zeros(0)
        cones = []
        if n_zero:
            cones.append(clarabel.ZeroConeT(n_zero))
        if n_nonneg:
            cones.append(clarabel.NonnegativeConeT(n_nonneg))

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = 1e-9
        settings.tol_gap_abs = 1e-9
        settings.tol_gap_rel = 1e-9
        solver = clarabel.DefaultSolver(self.p_upper, self.q, a_all, b_all, cones, settings)
        sol = solver.solve()
        status = str(sol.status)
        if status in ("Solved", "AlmostSolved"):
            x = np.asarray(sol.x)
            return RelaxationResult(OPTIMAL, x, self.model.objective.value(x))
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return RelaxationResult(INFEASIBLE, None, None)
        if status in ("DualInfeasible", "AlmostDualInfeasible"):
            return RelaxationResult(UNBOUNDED, None, None)
        raise RuntimeError(f"QP relaxation failed with status {status}")


def _build_sparse(rows, n) -> sp.csr_matrix:
    data, ri, ci = [], [], []
    for k, (idx, val) in enumerate(rows):
        ri.extend([k] * len(idx))
        ci.extend(idx)
        data.extend(val)
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))


def solve_relaxation(model: MipModel, fixed=None) -> RelaxationResult:
    """One-shot relaxation solve; see :class:`RelaxationEngine` for repeats."""
    return RelaxationEngine(model).solve(fixed)

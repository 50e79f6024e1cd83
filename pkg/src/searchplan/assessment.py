"""Stage one: a single mixed-integer program that threads the agent past
every waypoint.

Each waypoint gets exactly one visiting step; the objective is the sum of
gated L1 distances between the trajectory and the waypoints at their visit
steps, so the optimizer picks both the schedule and the controls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mip
from .dynamics import (
    AgentParams,
    AgentState,
    ControlInput,
    Plan,
    phi_powers,
    rollout,
    transition_matrices,
)
from .geometry import Waypoint


class AssessmentError(RuntimeError):
    """Raised when no feasible stage-one plan could be produced."""


@dataclass
class AssessmentProblem:
    x0: AgentState
    waypoints: list[Waypoint]
    horizon: int
    params: AgentParams
    big_m: float | None = None

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("at least one waypoint is required")
        if self.horizon < len(self.waypoints):
            raise ValueError(
                f"horizon {self.horizon} is shorter than the waypoint count "
                f"{len(self.waypoints)}; every waypoint needs its own step"
            )

    def gate_constant(self) -> float:
        """Explicit big-M, or the L1 diameter of the start/waypoint bounding
        box plus a one-step travel margin."""
        if self.big_m is not None:
            return self.big_m
        points = np.vstack([w.position for w in self.waypoints] + [self.x0.position])
        spread = points.max(axis=0) - points.min(axis=0)
        return float(spread.sum() + self.params.v_max * self.params.dt)


@dataclass(frozen=True)
class _Index:
    """Variable layout of the stage-one model (fixed construction order)."""

    horizon: int
    count: int

    def u(self, t: int, axis: int) -> int:
        return 3 * t + axis

    def split_pos(self, t: int, j: int, axis: int) -> int:
        return 3 * self.horizon + 7 * ((t - 1) * self.count + j) + axis

    def split_neg(self, t: int, j: int, axis: int) -> int:
        return self.split_pos(t, j, axis) + 3

    def miss(self, t: int, j: int) -> int:
        return self.split_pos(t, j, 0) + 6

    def visit(self, t: int, j: int) -> int:
        return 3 * self.horizon + 7 * self.horizon * self.count + (t - 1) * self.count + j


@dataclass
class AssessmentResult:
    plan: Plan
    visit_times: list[int]
    miss_distances: list[float]
    objective: float
    solution: mip.MipSolution


def build_assessment_model(problem: AssessmentProblem) -> mip.MipModel:
    model, _ = _build(problem)
    return model


def _build(problem: AssessmentProblem) -> tuple[mip.MipModel, _Index]:
    T = problem.horizon
    waypoints = problem.waypoints
    J = len(waypoints)
    params = problem.params
    index = _Index(T, J)
    big_m = problem.gate_constant()
    model = mip.MipModel("assessment")

    for t in range(T):
        for axis in "xyz":
            model.add_continuous(-params.u_max, params.u_max, f"u[{t},{axis}]")
    for t in range(1, T + 1):
        for j in range(J):
            for axis in "xyz":
                model.add_continuous(0.0, math.inf, f"split+[{t},{j},{axis}]")
            for axis in "xyz":
                model.add_continuous(0.0, math.inf, f"split-[{t},{j},{axis}]")
            model.add_continuous(0.0, math.inf, f"miss[{t},{j}]")
    for t in range(1, T + 1):
        for j in range(J):
            model.add_binary(f"visit[{t},{j}]")

    # Closed-form trajectory: state_t = Phi^t x0 + sum_tau Phi^tau Gamma u_{t-tau-1}.
    powers = phi_powers(params, T)
    _, gamma = transition_matrices(params)
    gains = [p @ gamma for p in powers]  # gains[tau] maps u_{t-tau-1} into state_t
    x0 = problem.x0.as_vector()
    free_states = [p @ x0 for p in powers]

    def position_terms(t: int, axis: int) -> tuple[list[tuple[int, float]], float]:
        coeffs = []
        for tau in range(t):
            gain = gains[tau][axis]
            for ax in range(3):
                if gain[ax] != 0.0:
                    coeffs.append((index.u(t - tau - 1, ax), float(gain[ax])))
        return coeffs, float(free_states[t][axis])

    def velocity_terms(t: int, axis: int) -> tuple[list[tuple[int, float]], float]:
        coeffs = []
        for tau in range(t):
            gain = gains[tau][3 + axis]
            for ax in range(3):
                if gain[ax] != 0.0:
                    coeffs.append((index.u(t - tau - 1, ax), float(gain[ax])))
        return coeffs, float(free_states[t][3 + axis])

    for t in range(1, T + 1):
        for axis in range(3):
            coeffs, offset = velocity_terms(t, axis)
            if coeffs:
                model.add_constraint(coeffs, mip.LE, params.v_max - offset, f"vmax[{t},{axis}]")
                model.add_constraint(coeffs, mip.GE, -params.v_max - offset, f"vmin[{t},{axis}]")

    for t in range(1, T + 1):
        pos_terms = [position_terms(t, axis) for axis in range(3)]
        for j, waypoint in enumerate(waypoints):
            for axis in range(3):
                coeffs, offset = pos_terms[axis]
                row = [(index.split_pos(t, j, axis), 1.0), (index.split_neg(t, j, axis), -1.0)]
                row.extend((var, -c) for var, c in coeffs)
                rhs = offset - float(waypoint.position[axis])
                model.add_constraint(row, mip.EQ, rhs, f"split[{t},{j},{axis}]")
            split_sum = [(index.split_pos(t, j, axis), 1.0) for axis in range(3)]
            split_sum += [(index.split_neg(t, j, axis), 1.0) for axis in range(3)]
            miss = index.miss(t, j)
            visit = index.visit(t, j)
            model.add_constraint([(miss, 1.0), (visit, -big_m)], mip.LE, 0.0, f"gate_on[{t},{j}]")
            model.add_constraint([(miss, 1.0)] + [(v, -c) for v, c in split_sum],
                                 mip.LE, 0.0, f"gate_ub[{t},{j}]")
            model.add_constraint([(miss, 1.0)] + [(v, -c) for v, c in split_sum]
                                 + [(visit, -big_m)], mip.GE, -big_m, f"gate_lb[{t},{j}]")
            model.objective.add_linear(miss, 1.0)

    for j in range(J):
        model.add_constraint([(index.visit(t, j), 1.0) for t in range(1, T + 1)],
                             mip.EQ, 1.0, f"visit_once[{j}]")
    return model, index


def _schedule_warm_start(problem: AssessmentProblem, index: _Index) -> dict[int, float]:
    """Greedy nearest-neighbor visit schedule; any schedule is feasible."""
    T = problem.horizon
    params = problem.params
    remaining = list(range(len(problem.waypoints)))
    here = problem.x0.position
    order = []
    while remaining:
        nxt = min(remaining, key=lambda j: (float(np.abs(problem.waypoints[j].position - here).sum()), j))
        order.append(nxt)
        here = problem.waypoints[nxt].position
        remaining.remove(nxt)

    cruise = 0.6 * params.v_max * params.dt
    here = problem.x0.position
    t = 0
    times = {}
    for j in order:
        dist = float(np.abs(problem.waypoints[j].position - here).sum())
        t = min(T, t + max(1, int(round(dist / cruise))))
        times[j] = t
        here = problem.waypoints[j].position

    values = {}
    for t in range(1, T + 1):
        for j in range(len(problem.waypoints)):
            values[index.visit(t, j)] = 1.0 if times[j] == t else 0.0
    return values


def _schedule_rounding_heuristic(problem: AssessmentProblem, index: _Index):
    """Primal heuristic: read the trajectory out of a relaxation point and
    give every waypoint its best visiting step; any schedule is feasible."""
    T = problem.horizon
    params = problem.params
    powers = phi_powers(params, T)
    _, gamma = transition_matrices(params)
    gains = [p @ gamma for p in powers]
    x0 = problem.x0.as_vector()
    free_states = [p @ x0 for p in powers]

    def heuristic(x: np.ndarray) -> dict[int, float]:
        controls = np.array([[x[index.u(t, ax)] for ax in range(3)] for t in range(T)])
        positions = np.empty((T + 1, 3))
        positions[0] = free_states[0][:3]
        for t in range(1, T + 1):
            pos = free_states[t][:3].copy()
            for tau in range(t):
                pos += gains[tau][:3] @ controls[t - tau - 1]
            positions[t] = pos
        values = {}
        for j, waypoint in enumerate(problem.waypoints):
            misses = np.abs(positions[1:] - waypoint.position).sum(axis=1)
            best_t = int(np.argmin(misses)) + 1
            for t in range(1, T + 1):
                values[index.visit(t, j)] = 1.0 if t == best_t else 0.0
        return values

    return heuristic


def solve_assessment(problem: AssessmentProblem,
                     limits: mip.SolveLimits | None = None) -> AssessmentResult:
    model, index = _build(problem)
    warm = _schedule_warm_start(problem, index)
    solution = mip.solve(model, limits, warm_start=warm,
                         primal_heuristic=_schedule_rounding_heuristic(problem, index))
    if not solution.has_solution:
        raise AssessmentError(f"stage-one solve produced no plan (status {solution.status})")

    T = problem.horizon
    controls = [
        ControlInput([solution.value(index.u(t, ax)) for ax in range(3)]) for t in range(T)
    ]
    plan = rollout(problem.x0, controls, problem.params)

    visit_times = []
    miss_distances = []
    positions = plan.positions()
    for j, waypoint in enumerate(problem.waypoints):
        t_j = next(t for t in range(1, T + 1) if solution.value(index.visit(t, j)) > 0.5)
        visit_times.append(t_j)
        miss_distances.append(float(np.abs(positions[t_j] - waypoint.position).sum()))
    return AssessmentResult(plan, visit_times, miss_distances, solution.objective, solution)

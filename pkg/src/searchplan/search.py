"""Stage two: one rolling-horizon step of the coverage planner.

Each step solves a mixed-integer quadratic program that rewards entering
unvisited coverage boxes, steers toward the nearest one, keeps clear of
obstacle polyhedra through indicator constraints, and respects the agent's
dynamics and actuation limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mip
from .dynamics import (
    AgentParams,
    AgentState,
    ControlInput,
    step,
    transition_matrices,
)
from .geometry import CoverageCuboid, Cuboid

DEFAULT_SAFETY_MARGIN = 1.0

# Clearance used when deciding reference-plan binaries, so boundary-grazing
# points never claim a containment the polished plan cannot honor.
_REF_CLEARANCE = 1e-7


class AllCuboidsVisited(Exception):
    """Every coverage box has been entered; the mission is complete."""


class SearchStepInfeasible(RuntimeError):
    def __init__(self, message: str, state: AgentState, active_obstacles: list[str]):
        super().__init__(message)
        self.state = state
        self.active_obstacles = active_obstacles


class VisitedMap:
    """Per-cuboid visit record; bits only ever flip to visited."""

    def __init__(self, count: int):
        self._flags = np.zeros(count, dtype=bool)

    @classmethod
    def from_flags(cls, flags) -> "VisitedMap":
        vm = cls(len(flags))
        vm._flags[:] = np.asarray(flags, dtype=bool)
        return vm

    def __len__(self) -> int:
        return self._flags.size

    def __getitem__(self, index: int) -> bool:
        return bool(self._flags[index])

    def mark(self, index: int) -> None:
        self._flags[index] = True

    def flags(self) -> np.ndarray:
        return self._flags.copy()

    @property
    def visited_count(self) -> int:
        return int(self._flags.sum())

    @property
    def all_visited(self) -> bool:
        return bool(self._flags.all())

    def unvisited_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(~self._flags)]

    def copy(self) -> "VisitedMap":
        return VisitedMap.from_flags(self._flags)


@dataclass
class SearchProblem:
    state: AgentState
    cuboids: list[CoverageCuboid]
    obstacles: list[tuple[str, Cuboid]]
    visited: VisitedMap
    weights: tuple[float, float, float]
    horizon: int
    params: AgentParams
    bounds: tuple[np.ndarray, np.ndarray]
    safety_margin: float = DEFAULT_SAFETY_MARGIN
    big_m: float | None = None
    tau_star: int | None = None  # objective tracking step; defaults to horizon - 1

    def __post_init__(self):
        if not self.cuboids:
            raise ValueError("at least one coverage cuboid is required")
        if len(self.visited) != len(self.cuboids):
            raise ValueError("visited map size must match the cuboid count")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if any(w < 0 for w in self.weights):
            raise ValueError("objective weights must be nonnegative")
        if self.safety_margin <= 0:
            raise ValueError("safety margin must be positive")
        lo, hi = self.bounds
        self.bounds = (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if self.tau_star is not None and not 0 <= self.tau_star < self.horizon:
            raise ValueError("tau_star must lie in [0, horizon)")

    @property
    def tracking_step(self) -> int:
        return self.horizon - 1 if self.tau_star is None else self.tau_star


@dataclass
class SearchStepResult:
    controls: np.ndarray  # (T, 3) planned forces
    states: list[AgentState]  # planned states at steps 1..T
    reward_flags: np.ndarray  # y values per cuboid
    visit_flags: np.ndarray  # per-cuboid "entered in this plan" values
    objective: float
    solution: mip.MipSolution
    target_index: int
    target: np.ndarray
    horizon_used: int


def nearest_unvisited(state: AgentState, cuboids, visited: VisitedMap) -> tuple[int, np.ndarray]:
    """Index and centroid of the closest unvisited box (lowest index on ties)."""
    best = None
    for n, cuboid in enumerate(cuboids):
        if visited[n]:
            continue
        dist = float(np.linalg.norm(cuboid.centroid - state.position))
        if best is None or dist < best[0] - 1e-12:
            best = (dist, n, cuboid.centroid)
    if best is None:
        raise AllCuboidsVisited("all coverage cuboids have been visited")
    return best[1], best[2]


def count_binaries(num_objects: int, cuboids_per_object, num_obstacles: int,
                   horizon: int, faces: int = 6) -> int:
    """Binary-variable count of the stage-two program."""
    if isinstance(cuboids_per_object, (int, np.integer)):
        total = int(num_objects) * int(cuboids_per_object)
    else:
        counts = [int(c) for c in cuboids_per_object]
        if num_objects != len(counts):
            raise ValueError("per-object cuboid counts must match the object count")
        total = sum(counts)
    if min(num_objects, total if num_objects else 0, num_obstacles, horizon, faces) < 0:
        raise ValueError("all counts must be nonnegative")
    return 2 * total + horizon * (total * (faces + 1) + num_obstacles * faces)


@dataclass(frozen=True)
class _Index:
    """Variable layout of the stage-two model (fixed construction order)."""

    horizon: int
    num_cuboids: int
    num_obstacles: int
    num_faces_per_cuboid: tuple[int, ...]
    num_faces_per_obstacle: tuple[int, ...]

    def u(self, tau: int, axis: int) -> int:
        return 3 * tau + axis

    def state(self, t: int, comp: int) -> int:
        """State variable for step t in 1..T; comp 0..2 position, 3..5 velocity."""
        return 3 * self.horizon + 6 * (t - 1) + comp

    @property
    def _base_y(self) -> int:
        return 9 * self.horizon

    def reward(self, n: int) -> int:
        return self._base_y + n

    def entered(self, n: int) -> int:
        return self._base_y + self.num_cuboids + n

    def inside(self, tau: int, n: int) -> int:
        return self._base_y + 2 * self.num_cuboids + tau * self.num_cuboids + n

    def face(self, tau: int, n: int, l: int) -> int:
        base = self._base_y + 2 * self.num_cuboids + self.horizon * self.num_cuboids
        offset = sum(self.num_faces_per_cuboid) * tau
        offset += sum(self.num_faces_per_cuboid[:n]) + l
        return base + offset

    def clear(self, tau: int, psi: int, l: int) -> int:
        base = (self._base_y + 2 * self.num_cuboids + self.horizon * self.num_cuboids
                + self.horizon * sum(self.num_faces_per_cuboid))
        offset = sum(self.num_faces_per_obstacle) * tau
        offset += sum(self.num_faces_per_obstacle[:psi]) + l
        return base + offset


def _support(row: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """max of row @ x over the bounding box."""
    return float(np.where(row > 0, row * hi, row * lo).sum())


def build_search_model(problem: SearchProblem) -> mip.MipModel:
    model, _, _ = _build(problem)
    return model


def _build(problem: SearchProblem) -> tuple[mip.MipModel, _Index, np.ndarray]:
    T = problem.horizon
    params = problem.params
    lo, hi = problem.bounds
    a, b, c = problem.weights
    cuboids = problem.cuboids
    obstacles = problem.obstacles
    index = _Index(
        T,
        len(cuboids),
        len(obstacles),
        tuple(cc.cuboid.num_faces for cc in cuboids),
        tuple(ob.num_faces for _, ob in obstacles),
    )
    target_index, target = nearest_unvisited(problem.state, cuboids, problem.visited)

    model = mip.MipModel("search")
    for tau in range(T):
        for axis in "xyz":
            model.add_continuous(-params.u_max, params.u_max, f"u[{tau},{axis}]")
    for t in range(1, T + 1):
        for comp, axis in enumerate("xyz"):
            model.add_continuous(lo[comp], hi[comp], f"p[{t},{axis}]")
        for axis in "xyz":
            model.add_continuous(-params.v_max, params.v_max, f"v[{t},{axis}]")
    for n in range(len(cuboids)):
        model.add_binary(f"reward[{n}]")
    for n in range(len(cuboids)):
        model.add_binary(f"entered[{n}]")
    for tau in range(T):
        for n in range(len(cuboids)):
            model.add_binary(f"inside[{tau},{n}]")
    for tau in range(T):
        for n, cc in enumerate(cuboids):
            for l in range(cc.cuboid.num_faces):
                model.add_binary(f"face[{tau},{n},{l}]")
    for tau in range(T):
        for psi, (name, ob) in enumerate(obstacles):
            for l in range(ob.num_faces):
                model.add_binary(f"clear[{tau},{psi},{l}]")

    phi, gamma = transition_matrices(params)
    x_now = problem.state.as_vector()

    # Dynamics chain: state_{t+1} = Phi state_t + Gamma u_t, seeded at the
    # current state.
    for tau in range(T):
        for comp in range(6):
            coeffs = [(index.state(tau + 1, comp), 1.0)]
            rhs = 0.0
            if tau == 0:
                rhs = float(phi[comp] @ x_now)
            else:
                for k in range(6):
                    if phi[comp, k] != 0.0:
                        coeffs.append((index.state(tau, k), -float(phi[comp, k])))
            for k in range(3):
                if gamma[comp, k] != 0.0:
                    coeffs.append((index.u(tau, k), -float(gamma[comp, k])))
            model.add_constraint(coeffs, mip.EQ, rhs, f"dyn[{tau},{comp}]")

    # Face-membership indicators: pushing a face binary to 1 forces the
    # planned position into that halfspace; otherwise the row is slack over
    # the whole bounding box.
    for n, cc in enumerate(cuboids):
        body = cc.cuboid
        for l in range(body.num_faces):
            row = body.a_rows[l]
            offset = float(body.b[l])
            gate = problem.big_m
            if gate is None:
                gate = _support(row, lo, hi) - offset
            if gate <= 1e-9:
                continue  # halfspace holds everywhere in bounds
            for tau in range(T):
                coeffs = [(index.state(tau + 1, axis), float(row[axis]))
                          for axis in range(3) if row[axis] != 0.0]
                coeffs.append((index.face(tau, n, l), gate))
                model.add_constraint(coeffs, mip.LE, offset + gate, f"member[{tau},{n},{l}]")

    for tau in range(T):
        for n, cc in enumerate(cuboids):
            L = cc.cuboid.num_faces
            coeffs = [(index.inside(tau, n), float(L))]
            coeffs.extend((index.face(tau, n, l), -1.0) for l in range(L))
            model.add_constraint(coeffs, mip.LE, 0.0, f"contained[{tau},{n}]")

    for n in range(len(cuboids)):
        coeffs = [(index.entered(n), 1.0)]
        coeffs.extend((index.inside(tau, n), -1.0) for tau in range(T))
        model.add_constraint(coeffs, mip.LE, 0.0, f"entered_once[{n}]")
        visited_bonus = 1.0 if problem.visited[n] else 0.0
        model.add_constraint([(index.reward(n), 1.0), (index.entered(n), -1.0)],
                             mip.LE, visited_bonus, f"reward_gate[{n}]")

    # Obstacle exclusion: each planned position must clear at least one face
    # by the safety margin.
    eps = problem.safety_margin
    for psi, (name, ob) in enumerate(obstacles):
        L = ob.num_faces
        for l in range(L):
            row = ob.a_rows[l]
            offset = float(ob.b[l])
            gate = problem.big_m
            if gate is None:
                gate = offset + eps - float(np.where(row > 0, row * lo, row * hi).sum())
            if gate <= 1e-9:
                continue  # face clears the margin everywhere in bounds
            for tau in range(T):
                coeffs = [(index.state(tau + 1, axis), float(row[axis]))
                          for axis in range(3) if row[axis] != 0.0]
                coeffs.append((index.clear(tau, psi, l), gate))
                model.add_constraint(coeffs, mip.GE, offset + eps, f"avoid[{tau},{psi},{l}]")
        for tau in range(T):
            model.add_constraint([(index.clear(tau, psi, l), 1.0) for l in range(L)],
                                 mip.LE, float(L - 1), f"avoid_cap[{tau},{psi}]")

    track = index.horizon - 1 if problem.tau_star is None else problem.tau_star
    for axis in range(3):
        model.objective.add_squared([(index.state(track + 1, axis), 1.0)],
                                    constant=-float(target[axis]), weight=a)
    for tau in range(1, T):
        for axis in range(3):
            model.objective.add_squared(
                [(index.u(tau, axis), 1.0), (index.u(tau - 1, axis), -1.0)], weight=b)
    for n in range(len(cuboids)):
        model.objective.add_linear(index.reward(n), -c)

    expected = count_binaries(1, len(cuboids), len(obstacles), T)
    if all(cc.cuboid.num_faces == 6 for cc in cuboids) and \
            all(ob.num_faces == 6 for _, ob in obstacles):
        assert model.num_binaries == expected, (model.num_binaries, expected)
    return model, index, target


# -- reference plan (warm start) ---------------------------------------------


def _clip_control(desired_v: np.ndarray, velocity: np.ndarray, params: AgentParams) -> np.ndarray:
    """Force that moves velocity toward the target without breaking limits."""
    drag = params.drag_factor
    gain = params.control_gain
    u = (desired_v - drag * velocity) / gain
    u = np.clip(u, -params.u_max, params.u_max)
    # Keep the next velocity inside its box.
    v_next = drag * velocity + gain * u
    over = np.abs(v_next) > params.v_max
    if np.any(over):
        u[over] = (np.sign(v_next[over]) * params.v_max - drag * velocity[over]) / gain
        u = np.clip(u, -params.u_max, params.u_max)
    return u


def _reference_controls(problem: SearchProblem, target: np.ndarray) -> list[np.ndarray] | None:
    """Simulate a conservative dash toward the target that stays clear of
    obstacles and bounds; used purely as an integer-feasible warm start.

    A candidate move is accepted only if a full braking stop remains clear
    afterwards, so the reference never enters a state it cannot recover from.
    """
    params = problem.params
    lo, hi = problem.bounds
    eps = problem.safety_margin

    def clear(point: np.ndarray) -> bool:
        if np.any(point < lo - 1e-9) or np.any(point > hi + 1e-9):
            return False
        for _, ob in problem.obstacles:
            if ob.max_face_violation(point) < eps + 1e-6:
                return False
        return True

    def brake(state: AgentState) -> AgentState:
        return step(state, ControlInput(_clip_control(np.zeros(3), state.velocity, params)), params)

    def stoppable(state: AgentState) -> bool:
        s = state
        for _ in range(8):
            if not clear(s.position):
                return False
            if float(np.max(np.abs(s.velocity))) < 0.3:
                return True
            s = brake(s)
        return clear(s.position) and float(np.max(np.abs(s.velocity))) < 1.0

    if not clear(problem.state.position):
        return None
    state = problem.state
    controls: list[np.ndarray] = []
    for _ in range(problem.horizon):
        gap = target - state.position
        lateral = np.array([-gap[1], gap[0], 0.0])
        headings = [gap, gap + 0.8 * lateral, gap - 0.8 * lateral]
        headings.append(np.array([0.3 * gap[0], 0.3 * gap[1], 0.0])
                        + np.array([0.0, 0.0, max(1.0, abs(gap[2]) + 6.0)]))
        candidates = []
        for heading in headings:
            for scale in (0.7, 0.35, 0.15):
                v_des = np.clip(heading / params.dt, -params.v_max, params.v_max) * scale
                candidates.append(_clip_control(v_des, state.velocity, params))
        candidates.append(_clip_control(np.zeros(3), state.velocity, params))  # brake
        chosen = None
        for u in candidates:
            nxt = step(state, ControlInput(u), params)
            if clear(nxt.position) and np.all(np.abs(nxt.velocity) <= params.v_max + 1e-9) \
                    and stoppable(nxt):
                chosen = (u, nxt)
                break
        if chosen is None:
            return None
        controls.append(chosen[0])
        state = chosen[1]
    return controls


def _binaries_from_positions(problem: SearchProblem, index: _Index,
                             positions) -> dict[int, float] | None:
    """Integer assignment consistent with the given planned positions, or
    None when some position sits inside an obstacle's safety shell."""
    values: dict[int, float] = {}
    entered = np.zeros(len(problem.cuboids), dtype=bool)
    for tau, p in enumerate(positions):
        for n, cc in enumerate(problem.cuboids):
            body = cc.cuboid
            residuals = body.a_rows @ p - body.b
            all_in = True
            for l, res in enumerate(residuals):
                face_in = bool(res <= -_REF_CLEARANCE)
                values[index.face(tau, n, l)] = 1.0 if face_in else 0.0
                all_in = all_in and face_in
            values[index.inside(tau, n)] = 1.0 if all_in else 0.0
            entered[n] = entered[n] or all_in
        for psi, (_, ob) in enumerate(problem.obstacles):
            residuals = ob.a_rows @ p - ob.b
            cleared = residuals >= problem.safety_margin + _REF_CLEARANCE
            if not np.any(cleared):
                return None
            for l in range(ob.num_faces):
                values[index.clear(tau, psi, l)] = 0.0 if cleared[l] else 1.0
    for n in range(len(problem.cuboids)):
        values[index.entered(n)] = 1.0 if entered[n] else 0.0
        values[index.reward(n)] = 1.0 if (entered[n] or problem.visited[n]) else 0.0
    return values


def _warm_start(problem: SearchProblem, index: _Index, target: np.ndarray) -> dict[int, float] | None:
    controls = _reference_controls(problem, target)
    if controls is None:
        return None
    state = problem.state
    positions = []
    for u in controls:
        state = step(state, ControlInput(u), params=problem.params)
        positions.append(state.position)
    return _binaries_from_positions(problem, index, positions)


def _position_rounding_heuristic(problem: SearchProblem, index: _Index):
    """Primal heuristic: read planned positions out of a relaxation point and
    re-derive every binary from them."""
    T = problem.horizon

    def heuristic(x: np.ndarray) -> dict[int, float] | None:
        positions = [
            np.array([x[index.state(t, k)] for k in range(3)]) for t in range(1, T + 1)
        ]
        return _binaries_from_positions(problem, index, positions)

    return heuristic


def mpc_step(problem: SearchProblem, limits: mip.SolveLimits | None = None) -> SearchStepResult:
    """Solve one rolling-horizon step; only the first control gets applied."""
    if problem.visited.all_visited:
        raise AllCuboidsVisited("all coverage cuboids have been visited")
    result = _attempt(problem, limits)
    if result is None:
        # One retry with a longer horizon before giving up.
        longer = replace(problem, horizon=problem.horizon + 2)
        result = _attempt(longer, limits)
    if result is None:
        reach = problem.params.v_max * problem.params.dt * problem.horizon
        active = [name for name, ob in problem.obstacles
                  if ob.max_face_violation(problem.state.position) < reach]
        raise SearchStepInfeasible(
            f"search step infeasible at position {problem.state.position.tolist()} "
            f"(horizon {problem.horizon} and {problem.horizon + 2})",
            problem.state, active)
    return result


def _attempt(problem: SearchProblem, limits) -> SearchStepResult | None:
    model, index, target = _build(problem)
    warm = _warm_start(problem, index, target)
    solution = mip.solve(model, limits, warm_start=warm,
                         primal_heuristic=_position_rounding_heuristic(problem, index))
    if not solution.has_solution:
        return None
    violations = mip.validate(model, solution.values)
    if violations:
        names = [row.name for row in violations[:5]]
        raise RuntimeError(f"search solution violates its own constraints: {names}")

    T = problem.horizon
    controls = np.array([[solution.value(index.u(tau, ax)) for ax in range(3)]
                         for tau in range(T)])
    states = [
        AgentState(
            [solution.value(index.state(t, k)) for k in range(3)],
            [solution.value(index.state(t, k)) for k in range(3, 6)],
        )
        for t in range(1, T + 1)
    ]
    n_cub = len(problem.cuboids)
    reward = np.array([solution.value(index.reward(n)) for n in range(n_cub)])
    visits = np.array([solution.value(index.entered(n)) for n in range(n_cub)])
    target_index, _ = nearest_unvisited(problem.state, problem.cuboids, problem.visited)
    return SearchStepResult(controls, states, reward, visits, solution.objective,
                            solution, target_index, target, T)

"""Discrete-time double-integrator-with-drag model of the agent.

State is position plus velocity in 3D; the update is the affine map
``x_t = Phi x_{t-1} + Gamma u_{t-1}`` where the velocity block decays by the
drag factor ``1 - drag`` and force enters through the gain ``dt / mass``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOUNDS_TOL = 1e-6

# Selects the position block out of a 6-dim state vector.
POSITION_SELECTOR = np.hstack([np.eye(3), np.zeros((3, 3))])
POSITION_SELECTOR.setflags(write=False)


def _vec3(value, label: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} must be a finite 3-vector, got {value!r}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgentParams:
    """Physical constants: sampling interval, mass, drag and actuation limits."""

    dt: float
    mass: float
    drag: float
    u_max: float
    v_max: float
    fov_angle: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0.0 <= self.drag < 1.0:
            raise ValueError("drag must lie in [0, 1)")
        if self.u_max <= 0 or self.v_max <= 0:
            raise ValueError("u_max and v_max must be positive")

    @property
    def drag_factor(self) -> float:
        return 1.0 - self.drag

    @property
    def control_gain(self) -> float:
        return self.dt / self.mass


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, vec) -> "AgentState":
        v = np.asarray(vec, dtype=float).reshape(-1)
        if v.shape != (6,):
            raise ValueError("state vector must have 6 components")
        return cls(v[:3], v[3:])


@dataclass(frozen=True)
class ControlInput:
    force: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _vec3(self.force, "force"))


def transition_matrices(params: AgentParams) -> tuple[np.ndarray, np.ndarray]:
    """State and control matrices of the affine update."""
    phi = np.block([
        [np.eye(3), params.dt * np.eye(3)],
        [np.zeros((3, 3)), params.drag_factor * np.eye(3)],
    ])
    gamma = np.vstack([np.zeros((3, 3)), params.control_gain * np.eye(3)])
    return phi, gamma


def step(state: AgentState, control: ControlInput, params: AgentParams) -> AgentState:
    """One exact affine update; no clamping of any kind."""
    new_position = state.position + params.dt * state.velocity
    new_velocity = params.drag_factor * state.velocity + params.control_gain * control.force
    return AgentState(new_position, new_velocity)


@dataclass(frozen=True)
class Plan:
    """Initial state plus the (control, resulting state) pair of every step."""

    initial: AgentState
    steps: tuple[tuple[ControlInput, AgentState], ...]

    def __len__(self) -> int:
        return len(self.steps)

    def positions(self) -> np.ndarray:
        """(T+1, 3) array of positions, initial state first."""
        rows = [self.initial.position]
        rows.extend(state.position for _, state in self.steps)
        return np.array(rows)

    def velocities(self) -> np.ndarray:
        rows = [self.initial.velocity]
        rows.extend(state.velocity for _, state in self.steps)
        return np.array(rows)

    def controls(self) -> np.ndarray:
        return np.array([control.force for control, _ in self.steps]).reshape(len(self.steps), 3)

    def final_state(self) -> AgentState:
        return self.steps[-1][1] if self.steps else self.initial

    def verify(self, params: AgentParams, tol: float = 1e-9) -> bool:
        """True iff every stored state matches re-simulation within ``tol``."""
        state = self.initial
        for control, recorded in self.steps:
            state = step(state, control, params)
            err = max(
                float(np.max(np.abs(state.position - recorded.position))),
                float(np.max(np.abs(state.velocity - recorded.velocity))),
            )
            if err > tol:
                return False
            state = recorded
        return True


def rollout(x0: AgentState, controls, params: AgentParams) -> Plan:
    """Iterate the affine update over a control sequence."""
    control_list = [c if isinstance(c, ControlInput) else ControlInput(c) for c in controls]
    if not control_list:
        raise ValueError("controls must be nonempty")
    pairs = []
    state = x0
    for control in control_list:
        state = step(state, control, params)
        pairs.append((control, state))
    return Plan(x0, tuple(pairs))


def phi_powers(params: AgentParams, horizon: int) -> list[np.ndarray]:
    """[Phi^0, Phi^1, ..., Phi^horizon] for closed-form trajectory expressions."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    phi, _ = transition_matrices(params)
    powers = [np.eye(6)]
    for _ in range(horizon):
        powers.append(powers[-1] @ phi)
    return powers


@dataclass(frozen=True)
class BoundViolation:
    t: int
    kind: str  # "velocity" | "force"
    axis: int
    value: float
    limit: float


def check_bounds(plan: Plan, params: AgentParams, tol: float = BOUNDS_TOL) -> list[BoundViolation]:
    """Every (step, component) whose speed or force exceeds its limit."""
    violations = []
    for t, (control, state) in enumerate(plan.steps, start=1):
        for axis in range(3):
            force = float(control.force[axis])
            if abs(force) > params.u_max + tol:
                violations.append(BoundViolation(t, "force", axis, force, params.u_max))
            speed = float(state.velocity[axis])
            if abs(speed) > params.v_max + tol:
                violations.append(BoundViolation(t, "velocity", axis, speed, params.v_max))
    return violations

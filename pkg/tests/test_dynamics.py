import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchplan.dynamics import (
    POSITION_SELECTOR,
    AgentParams,
    AgentState,
    BoundViolation,
    ControlInput,
    Plan,
    check_bounds,
    phi_powers,
    rollout,
    step,
    transition_matrices,
)


def params(**overrides):
    base = dict(dt=1.0, mass=3.35, drag=0.2, u_max=20.0, v_max=15.0,
                fov_angle=math.radians(60.0))
    base.update(overrides)
    return AgentParams(**base)


def rest(position=(0.0, 0.0, 0.0)):
    return AgentState(position, [0.0, 0.0, 0.0])


class TestAgentParams:
    def test_experiment_constants(self):
        p = params()
        assert p.drag_factor == pytest.approx(0.8)
        assert p.control_gain == pytest.approx(1.0 / 3.35)

    @pytest.mark.parametrize("bad", [
        dict(dt=0.0), dict(dt=-1.0), dict(mass=0.0), dict(drag=1.0),
        dict(drag=-0.1), dict(u_max=0.0), dict(v_max=-2.0),
    ])
    def test_invariants_rejected(self, bad):
        with pytest.raises(ValueError):
            params(**bad)


class TestTransitionMatrices:
    def test_block_structure(self):
        p = params()
        phi, gamma = transition_matrices(p)
        assert phi.shape == (6, 6) and gamma.shape == (6, 3)
        assert np.allclose(phi[:3, :3], np.eye(3))
        assert np.allclose(phi[:3, 3:], p.dt * np.eye(3))
        assert np.allclose(phi[3:, :3], 0.0)
        assert np.allclose(phi[3:, 3:], 0.8 * np.eye(3))
        assert np.allclose(gamma[:3], 0.0)
        assert np.allclose(gamma[3:], (1.0 / 3.35) * np.eye(3))
        assert gamma[3, 0] == pytest.approx(0.29851, abs=5e-6)

    def test_no_drag_gives_identity_velocity_block(self):
        phi, _ = transition_matrices(params(drag=0.0))
        assert np.allclose(phi[3:, 3:], np.eye(3))


class TestStep:
    def test_unit_force_from_rest(self):
        # gamma * f_x = (1/3.35) * 3.35 = 1 exactly.
        nxt = step(rest(), ControlInput([3.35, 0.0, 0.0]), params())
        assert np.allclose(nxt.position, [0.0, 0.0, 0.0])
        assert np.allclose(nxt.velocity, [1.0, 0.0, 0.0])

    def test_coast_step_applies_drag(self):
        mid = step(rest(), ControlInput([3.35, 0.0, 0.0]), params())
        nxt = step(mid, ControlInput([0.0, 0.0, 0.0]), params())
        assert np.allclose(nxt.position, [1.0, 0.0, 0.0])
        assert np.allclose(nxt.velocity, [0.8, 0.0, 0.0])

    def test_rest_is_fixed_point(self):
        state = rest((4.0, 5.0, 6.0))
        nxt = step(state, ControlInput([0.0, 0.0, 0.0]), params())
        assert np.allclose(nxt.position, state.position)
        assert np.allclose(nxt.velocity, 0.0)

    def test_matches_matrix_form(self):
        p = params(dt=0.5, mass=2.0, drag=0.35)
        phi, gamma = transition_matrices(p)
        state = AgentState([1.0, -2.0, 3.0], [0.5, 0.25, -1.0])
        u = np.array([3.0, -4.0, 5.0])
        expected = phi @ state.as_vector() + gamma @ u
        nxt = step(state, ControlInput(u), p)
        assert np.allclose(nxt.as_vector(), expected, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        st.tuples(*[st.floats(-10, 10) for _ in range(6)]),
        st.tuples(*[st.floats(-10, 10) for _ in range(6)]),
        st.tuples(*[st.floats(-20, 20) for _ in range(3)]),
        st.tuples(*[st.floats(-20, 20) for _ in range(3)]),
        st.floats(0.0, 1.0),
    )
    def test_affine_combination(self, s1, s2, u1, u2, alpha):
        p = params()
        beta = 1.0 - alpha
        a = AgentState(s1[:3], s1[3:])
        b = AgentState(s2[:3], s2[3:])
        mixed_state = AgentState(
            alpha * a.position + beta * b.position,
            alpha * a.velocity + beta * b.velocity,
        )
        mixed_u = ControlInput(alpha * np.array(u1) + beta * np.array(u2))
        lhs = step(mixed_state, mixed_u, p).as_vector()
        rhs = (alpha * step(a, ControlInput(u1), p).as_vector()
               + beta * step(b, ControlInput(u2), p).as_vector())
        assert np.allclose(lhs, rhs, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95), st.tuples(*[st.floats(-12, 12) for _ in range(3)]))
    def test_speed_decays_geometrically_without_input(self, drag, v0):
        p = params(drag=drag)
        state = AgentState([0.0, 0.0, 0.0], v0)
        zero = ControlInput([0.0, 0.0, 0.0])
        for _ in range(5):
            nxt = step(state, zero, p)
            assert np.allclose(nxt.velocity, (1.0 - drag) * state.velocity, atol=1e-12)
            state = nxt


class TestRollout:
    def test_zero_controls_from_rest_holds_position(self):
        plan = rollout(rest((7.0, 8.0, 9.0)), [np.zeros(3)] * 5, params())
        assert np.allclose(plan.positions(), [[7.0, 8.0, 9.0]] * 6)

    def test_single_step_equals_step(self):
        u = np.array([2.0, -3.0, 4.0])
        plan = rollout(rest(), [u], params())
        direct = step(rest(), ControlInput(u), params())
        assert np.allclose(plan.steps[0][1].as_vector(), direct.as_vector())

    def test_matches_iterated_step(self):
        rng = np.random.default_rng(11)
        controls = [rng.uniform(-20, 20, size=3) for _ in range(3)]
        plan = rollout(rest(), controls, params())
        state = rest()
        for control, recorded in plan.steps:
            state = step(state, control, params())
            assert np.allclose(state.as_vector(), recorded.as_vector(), atol=1e-12)

    def test_empty_controls_rejected(self):
        with pytest.raises(ValueError):
            rollout(rest(), [], params())

    def test_closed_form_matches_rollout_up_to_64_steps(self):
        p = params()
        rng = np.random.default_rng(23)
        horizon = 64
        controls = [rng.uniform(-20, 20, size=3) for _ in range(horizon)]
        x0 = AgentState(rng.uniform(-5, 5, size=3), rng.uniform(-3, 3, size=3))
        plan = rollout(x0, controls, p)
        powers = phi_powers(p, horizon)
        _, gamma = transition_matrices(p)
        for t in range(1, horizon + 1):
            closed = powers[t] @ x0.as_vector()
            for tau in range(t):
                closed += (powers[tau] @ gamma) @ controls[t - tau - 1]
            assert np.allclose(plan.steps[t - 1][1].as_vector()[:3], closed[:3], atol=1e-9)

    def test_plan_verify(self):
        plan = rollout(rest(), [np.ones(3)] * 4, params())
        assert plan.verify(params())
        tampered = Plan(plan.initial, plan.steps[:-1] + (
            (plan.steps[-1][0], AgentState([99.0, 0.0, 0.0], [0.0, 0.0, 0.0])),))
        assert not tampered.verify(params())


class TestCheckBounds:
    def test_all_zero_plan_clean(self):
        plan = rollout(rest(), [np.zeros(3)] * 4, params())
        assert check_bounds(plan, params()) == []

    def test_single_force_violation(self):
        p = params()
        controls = [np.zeros(3), np.array([p.u_max + 1.0, 0.0, 0.0]), np.zeros(3)]
        plan = rollout(rest(), controls, p)
        violations = [v for v in check_bounds(plan, p) if v.kind == "force"]
        assert violations == [BoundViolation(2, "force", 0, p.u_max + 1.0, p.u_max)]

    def test_velocity_violation_reported_per_component(self):
        p = params()
        fast = AgentState([0.0, 0.0, 0.0], [p.v_max + 0.5, 0.0, -(p.v_max + 0.25)])
        plan = Plan(rest(), ((ControlInput([0.0, 0.0, 0.0]), fast),))
        kinds = {(v.t, v.kind, v.axis) for v in check_bounds(plan, p)}
        assert kinds == {(1, "velocity", 0), (1, "velocity", 2)}

    def test_tolerance_is_not_hair_trigger(self):
        p = params()
        barely = AgentState([0.0, 0.0, 0.0], [p.v_max + 1e-7, 0.0, 0.0])
        plan = Plan(rest(), ((ControlInput([0.0, 0.0, 0.0]), barely),))
        assert check_bounds(plan, p) == []


def test_position_selector_extracts_position():
    state = AgentState([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert np.allclose(POSITION_SELECTOR @ state.as_vector(), [1.0, 2.0, 3.0])

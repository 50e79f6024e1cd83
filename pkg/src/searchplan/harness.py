"""Mission execution: the rolling-horizon loop, visit bookkeeping and audits.

The loop solves one planning step, applies only the first control, marks
every coverage box the executed position has entered, and repeats until all
boxes are visited or the step budget runs out. Audits re-check the executed
trajectory independently of the optimizer: actuation bounds, obstacle and
object clearance at executed states, and (advisory) along sampled segments.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import mip
from .assessment import AssessmentProblem, AssessmentResult, solve_assessment
from .dynamics import (
    AgentParams,
    AgentState,
    BoundViolation,
    ControlInput,
    Plan,
    check_bounds,
    step,
)
from .geometry import CoverageCuboid, Cuboid, Waypoint, generate_coverage_cuboids, generate_waypoint
from .scenario_io import Scenario
from .search import (
    SearchProblem,
    SearchStepInfeasible,
    SearchStepResult,
    VisitedMap,
    mpc_step,
)

DEFAULT_SEGMENT_SAMPLES = 4
DEFAULT_SEARCH_NODE_BUDGET = 150
DEFAULT_ASSESS_NODE_BUDGET = 2000

# Agent constants used by standalone studies when no scenario is in play.
STUDY_AGENT_PARAMS = AgentParams(
    dt=1.0, mass=3.35, drag=0.2, u_max=20.0, v_max=15.0, fov_angle=np.deg2rad(60.0)
)

COMPLETE = "complete"
MAX_STEPS = "max_steps"
SOLVER_FAILURE = "solver_failure"


@dataclass
class RunConfig:
    scenario: Scenario
    stage: str = "search"  # "assess" | "search" | "both"
    max_steps: int = 200
    limits: mip.SolveLimits | None = None
    assess_limits: mip.SolveLimits | None = None
    seed: int = 0
    segment_samples: int = DEFAULT_SEGMENT_SAMPLES

    def __post_init__(self):
        if self.stage not in ("assess", "search", "both"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.limits is None:
            self.limits = mip.SolveLimits(node_limit=DEFAULT_SEARCH_NODE_BUDGET)
        if self.assess_limits is None:
            self.assess_limits = mip.SolveLimits(node_limit=DEFAULT_ASSESS_NODE_BUDGET)


@dataclass(frozen=True)
class CollisionViolation:
    t: int
    fraction: float  # 1.0 at the executed state, in (0,1) along the segment
    body: str
    clearance: float


@dataclass
class StepRecord:
    step: int
    nodes: int
    objective: float
    solver_status: str
    new_visits: list[int]
    wall_time: float


@dataclass
class CoverageReport:
    scenario_digest: str
    termination: str
    steps_used: int
    visit_steps: list[int | None]
    cuboid_tags: list[tuple[str, int, int]]  # (object_id, face_index, cell_index)
    faces_covered: dict[str, list[int]]
    faces_selected: dict[str, list[int]]
    state_collisions: list[CollisionViolation]
    segment_collisions: list[CollisionViolation]
    bound_violations: list[BoundViolation]
    step_records: list[StepRecord]

    @property
    def complete(self) -> bool:
        return self.termination == COMPLETE

    @property
    def visited_count(self) -> int:
        return sum(1 for s in self.visit_steps if s is not None)

    @property
    def total_nodes(self) -> int:
        return sum(r.nodes for r in self.step_records)

    @property
    def total_wall_time(self) -> float:
        return sum(r.wall_time for r in self.step_records)


def waypoints_for(scenario: Scenario) -> list[Waypoint]:
    return [
        generate_waypoint(spec.cuboid, spec.clearance, spec.object_id)
        for spec in scenario.objects
    ]


def coverage_cuboids_for(scenario: Scenario) -> list[CoverageCuboid]:
    """All coverage boxes of the scenario, flattened in authoring order."""
    out: list[CoverageCuboid] = []
    for spec in scenario.objects:
        out.extend(
            generate_coverage_cuboids(
                spec.cuboid,
                spec.faces,
                spec.standoff,
                scenario.params.fov_angle,
                scenario.depth_fraction * spec.standoff,
                spec.object_id,
            )
        )
    return out


def assessment_problem_for(scenario: Scenario, horizon: int | None = None) -> AssessmentProblem:
    return AssessmentProblem(
        scenario.initial_state,
        waypoints_for(scenario),
        horizon or scenario.horizon_assess,
        scenario.params,
        scenario.big_m,
    )


def run_search_mission(config: RunConfig) -> tuple[Plan, CoverageReport]:
    """Roll the planner forward step by step until coverage is complete."""
    scenario = config.scenario
    params = scenario.params
    cuboids = coverage_cuboids_for(scenario)
    obstacles = [(ob.object_id, ob.cuboid) for ob in scenario.obstacles]
    bounds = (scenario.bounds_lo, scenario.bounds_hi)
    visited = VisitedMap(len(cuboids))

    state = scenario.initial_state
    for n, cc in enumerate(cuboids):
        if cc.cuboid.max_face_violation(state.position) <= 1e-9:
            visited.mark(n)
    initial_visits = visited.flags()

    pairs: list[tuple[ControlInput, AgentState]] = []
    records: list[StepRecord] = []
    termination = MAX_STEPS
    for step_no in range(1, config.max_steps + 1):
        if visited.all_visited:
            termination = COMPLETE
            break
        problem = SearchProblem(
            state,
            cuboids,
            obstacles,
            visited,
            scenario.weights,
            scenario.horizon_search,
            params,
            bounds,
            scenario.epsilon,
            scenario.big_m,
        )
        t0 = time.perf_counter()
        try:
            result = mpc_step(problem, config.limits)
        except SearchStepInfeasible:
            termination = SOLVER_FAILURE
            records.append(StepRecord(step_no, 0, float("nan"), "infeasible", [],
                                      time.perf_counter() - t0))
            break
        control = ControlInput(result.controls[0])
        state = step(state, control, params)
        pairs.append((control, state))
        new_visits = []
        for n in visited.unvisited_indices():
            if cuboids[n].cuboid.max_face_violation(state.position) <= 1e-9:
                visited.mark(n)
                new_visits.append(n)
        records.append(StepRecord(step_no, result.solution.nodes_explored,
                                  result.objective, result.solution.status,
                                  new_visits, time.perf_counter() - t0))
    else:
        if visited.all_visited:
            termination = COMPLETE

    plan = Plan(scenario.initial_state, tuple(pairs))
    report = build_coverage_report(
        scenario, plan, cuboids, visited, initial_visits, records, termination,
        config.segment_samples,
    )
    return plan, report


def build_coverage_report(scenario, plan, cuboids, visited, initial_visits, records,
                          termination, segment_samples) -> CoverageReport:
    visit_steps: list[int | None] = [None] * len(cuboids)
    for n in range(len(cuboids)):
        if initial_visits[n]:
            visit_steps[n] = 0
    for record in records:
        for n in record.new_visits:
            visit_steps[n] = record.step

    faces_selected: dict[str, list[int]] = {}
    faces_covered: dict[str, list[int]] = {}
    for spec in scenario.objects:
        faces_selected[spec.object_id] = sorted(spec.faces)
        covered = []
        for face in sorted(spec.faces):
            members = [n for n, cc in enumerate(cuboids)
                       if cc.object_id == spec.object_id and cc.face_index == face]
            if members and all(visit_steps[n] is not None for n in members):
                covered.append(face)
        faces_covered[spec.object_id] = covered

    obstacles = [(ob.object_id, ob.cuboid) for ob in scenario.obstacles]
    objects = [(spec.object_id, spec.cuboid) for spec in scenario.objects]
    audit = audit_collisions(plan, obstacles, objects, segment_samples,
                             margin=scenario.epsilon)
    state_cols = [v for v in audit if v.fraction in (0.0, 1.0)]
    segment_cols = [v for v in audit if 0.0 < v.fraction < 1.0]

    return CoverageReport(
        scenario_digest=scenario.digest(),
        termination=termination,
        steps_used=len(plan),
        visit_steps=visit_steps,
        cuboid_tags=[(cc.object_id, cc.face_index, cc.cell_index) for cc in cuboids],
        faces_covered=faces_covered,
        faces_selected=faces_selected,
        state_collisions=state_cols,
        segment_collisions=segment_cols,
        bound_violations=check_bounds(plan, scenario.params),
        step_records=records,
    )


def audit_collisions(plan: Plan, obstacles, objects, samples_per_segment: int,
                     margin: float = 1.0) -> list[CollisionViolation]:
    """Check executed states and interpolated segment points against every
    body interior, with the safety margin. Tolerance matches the planner's."""
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be at least 1")
    bodies = list(obstacles) + list(objects)
    positions = plan.positions()
    violations: list[CollisionViolation] = []

    def check(point: np.ndarray, t: int, fraction: float) -> None:
        for name, body in bodies:
            clearance = body.max_face_violation(point)
            if clearance < margin - 1e-6:
                violations.append(CollisionViolation(t, fraction, name, float(clearance)))

    check(positions[0], 0, 0.0)
    for t in range(1, positions.shape[0]):
        a, b = positions[t - 1], positions[t]
        for i in range(1, samples_per_segment + 1):
            frac = i / (samples_per_segment + 1)
            check(a + frac * (b - a), t, frac)
        check(b, t, 1.0)
    return violations


@dataclass(frozen=True)
class StudyRow:
    waypoint_count: int
    trials: int
    mean_objective: float
    mean_nodes: float
    mean_runtime: float


def _study_trial(args) -> tuple[int, int, float, int, float]:
    dims, count, horizon, seed, count_key, trial, limit_nodes = args
    rng = np.random.default_rng([seed, count_key, trial])
    lo = np.zeros(3)
    hi = np.asarray(dims, dtype=float)
    waypoints = [Waypoint(rng.uniform(lo, hi)) for _ in range(count)]
    x0 = AgentState([hi[0] / 2.0, hi[1] / 2.0, 0.0], [0.0, 0.0, 0.0])
    problem = AssessmentProblem(x0, waypoints, horizon, STUDY_AGENT_PARAMS)
    t0 = time.perf_counter()
    result = solve_assessment(problem, mip.SolveLimits(node_limit=limit_nodes))
    runtime = time.perf_counter() - t0
    return (count, trial, result.objective, result.solution.nodes_explored, runtime)


def waypoint_scaling_study(
    area_dims,
    waypoint_counts,
    trials: int,
    horizon: int,
    seed: int,
    node_limit: int = DEFAULT_ASSESS_NODE_BUDGET,
    workers: int = 1,
) -> list[StudyRow]:
    """Monte Carlo sweep over waypoint counts with per-trial seeded draws.

    Objectives and node counts are deterministic for a given seed; runtimes
    are measured and therefore are not.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    counts = [int(c) for c in waypoint_counts]
    tasks = [
        (tuple(area_dims), count, horizon, seed, count, trial, node_limit)
        for count in counts
        for trial in range(trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_study_trial, tasks))
    else:
        outcomes = [_study_trial(t) for t in tasks]
    outcomes.sort(key=lambda row: (counts.index(row[0]), row[1]))

    rows = []
    for count in counts:
        chunk = [o for o in outcomes if o[0] == count]
        rows.append(StudyRow(
            count,
            trials,
            float(np.mean([o[2] for o in chunk])),
            float(np.mean([o[3] for o in chunk])),
            float(np.mean([o[4] for o in chunk])),
        ))
    return rows


@dataclass
class MissionResult:
    assessment: AssessmentResult | None = None
    search_plan: Plan | None = None
    report: CoverageReport | None = None


def run_mission(config: RunConfig) -> MissionResult:
    """Dispatch on the configured stage selection."""
    result = MissionResult()
    if config.stage in ("assess", "both"):
        result.assessment = solve_assessment(
            assessment_problem_for(config.scenario), config.assess_limits)
    if config.stage in ("search", "both"):
        result.search_plan, result.report = run_search_mission(config)
    return result

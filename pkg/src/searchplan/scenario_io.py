"""Scenario schema, parsing, validation and result export.

Scenarios are JSON documents; every default is materialized into the parsed
value so a run is fully described by its scenario digest. Exports are
deterministic byte-for-byte: trajectory rows use shortest round-trip float
formatting and reports are canonical JSON. Measured wall times never enter
an export, so re-running a seeded mission reproduces identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import AgentParams, AgentState, Plan
from .geometry import Cuboid

if TYPE_CHECKING:  # pragma: no cover
    from .assessment import AssessmentResult
    from .harness import CoverageReport

SCHEMA = "searchplan-scenario/1"

DEFAULT_FACES = [1, 2, 3, 4, 5]  # everything but the ground-contact face
DEFAULT_CLEARANCE = 10.0
DEFAULT_EPSILON = 1.0
DEFAULT_DEPTH_FRACTION = 0.2
DEFAULT_WEIGHTS = (0.3, 0.001, 1.5)
DEFAULT_HORIZON_ASSESS = 30
DEFAULT_HORIZON_SEARCH = 10

TRAJECTORY_HEADER = "t,px,py,pz,vx,vy,vz,fx,fy,fz"


class ScenarioError(ValueError):
    """Parse or validation failure; carries every offense found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    cuboid: Cuboid
    faces: tuple[int, ...]
    standoff: float
    clearance: float


@dataclass(frozen=True)
class ObstacleSpec:
    object_id: str
    cuboid: Cuboid


@dataclass
class Scenario:
    name: str
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    params: AgentParams
    initial_state: AgentState
    objects: list[ObjectSpec]
    obstacles: list[ObstacleSpec]
    weights: tuple[float, float, float]
    horizon_assess: int
    horizon_search: int
    epsilon: float
    depth_fraction: float
    big_m: float | None
    raw: dict

    def digest(self) -> str:
        """Stable hash of the fully materialized scenario document."""
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _collect(errors: list[str], condition: bool, message: str) -> bool:
    if not condition:
        errors.append(message)
    return condition


def _get_vec3(doc, path, errors, label) -> np.ndarray | None:
    try:
        arr = np.asarray(doc, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        errors.append(f"{label}: expected a 3-vector of numbers")
        return None
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        errors.append(f"{label}: expected a finite 3-vector")
        return None
    return arr


def _require(doc: dict, key: str, errors: list[str], label: str):
    if key not in doc:
        errors.append(f"{label}.{key}: missing required field")
        return None
    return doc[key]


def parse_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            [f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["scenario document must be a JSON object"])

    errors: list[str] = []
    name = str(doc.get("name", "scenario"))

    bounds = _require(doc, "bounds", errors, "scenario") or {}
    lo = _get_vec3(bounds.get("min"), "bounds.min", errors, "bounds.min") if bounds else None
    hi = _get_vec3(bounds.get("max"), "bounds.max", errors, "bounds.max") if bounds else None
    if lo is not None and hi is not None and np.any(lo >= hi):
        errors.append("bounds: min must be strictly below max on every axis")
        lo = hi = None

    agent = _require(doc, "agent", errors, "scenario") or {}
    params = None
    initial = None
    if agent:
        try:
            params = AgentParams(
                dt=float(agent.get("dt", 1.0)),
                mass=float(_require(agent, "mass", errors, "agent") or 1.0),
                drag=float(agent.get("drag", 0.0)),
                u_max=float(_require(agent, "u_max", errors, "agent") or 1.0),
                v_max=float(_require(agent, "v_max", errors, "agent") or 1.0),
                fov_angle=float(np.deg2rad(float(agent.get("fov_angle_deg", 60.0)))),
            )
        except (TypeError, ValueError) as exc:
            errors.append(f"agent: {exc}")
        pos = _get_vec3(agent.get("position"), "agent.position", errors, "agent.position")
        vel = _get_vec3(agent.get("velocity", [0.0, 0.0, 0.0]), "agent.velocity",
                        errors, "agent.velocity")
        if pos is not None and vel is not None:
            initial = AgentState(pos, vel)

    overrides = doc.get("overrides", {}) or {}
    epsilon = float(overrides.get("epsilon", DEFAULT_EPSILON))
    depth_fraction = float(overrides.get("depth_fraction", DEFAULT_DEPTH_FRACTION))
    big_m = overrides.get("big_m", None)
    big_m = None if big_m is None else float(big_m)
    _collect(errors, epsilon > 0, "overrides.epsilon: must be positive")
    _collect(errors, 0 < depth_fraction < 2,
             "overrides.depth_fraction: must lie in (0, 2) so boxes clear the object")

    raw_objects = doc.get("objects", [])
    objects: list[ObjectSpec] = []
    if _collect(errors, isinstance(raw_objects, list) and len(raw_objects) > 0,
                "objects: no objects of interest"):
        for i, entry in enumerate(raw_objects):
            label = f"objects[{i}]"
            if not isinstance(entry, dict):
                errors.append(f"{label}: expected an object")
                continue
            object_id = str(entry.get("id", f"object{i}"))
            center = _get_vec3(entry.get("center"), f"{label}.center", errors, f"{label}.center")
            half = _get_vec3(entry.get("half_extents"), f"{label}.half_extents", errors,
                             f"{label}.half_extents")
            cuboid = None
            if center is not None and half is not None:
                try:
                    cuboid = Cuboid.from_center_half_extents(center, half)
                except ValueError as exc:
                    errors.append(f"{label}: {exc}")
            faces = entry.get("faces", DEFAULT_FACES)
            try:
                faces = tuple(sorted(set(int(f) for f in faces)))
            except (TypeError, ValueError):
                errors.append(f"{label}.faces: expected a list of face indices")
                faces = ()
            if faces and (min(faces) < 1 or max(faces) > 6):
                errors.append(f"{label}.faces: face indices must lie in 1..6")
                faces = ()
            try:
                standoff = float(_require(entry, "standoff", errors, label))
            except (TypeError, ValueError):
                standoff = 0.0
            clearance = float(entry.get("clearance", DEFAULT_CLEARANCE))
            _collect(errors, standoff > 0, f"{label}.standoff: must be positive")
            _collect(errors, clearance > 0, f"{label}.clearance: must be positive")
            if standoff > 0 and not standoff > depth_fraction * standoff / 2.0:
                errors.append(f"{label}: coverage boxes would intersect the object")
            if cuboid is not None and faces and standoff > 0 and clearance > 0:
                objects.append(ObjectSpec(object_id, cuboid, faces, standoff, clearance))

    raw_obstacles = doc.get("obstacles", [])
    obstacles: list[ObstacleSpec] = []
    if not isinstance(raw_obstacles, list):
        errors.append("obstacles: expected a list")
        raw_obstacles = []
    for i, entry in enumerate(raw_obstacles):
        label = f"obstacles[{i}]"
        if not isinstance(entry, dict):
            errors.append(f"{label}: expected an object")
            continue
        object_id = str(entry.get("id", f"obstacle{i}"))
        cuboid = None
        if "normals" in entry or "offsets" in entry:
            try:
                cuboid = Cuboid(np.asarray(entry.get("normals"), dtype=float),
                                np.asarray(entry.get("offsets"), dtype=float))
            except (TypeError, ValueError) as exc:
                errors.append(f"{label}: invalid halfspace system: {exc}")
        else:
            center = _get_vec3(entry.get("center"), f"{label}.center", errors, f"{label}.center")
            half = _get_vec3(entry.get("half_extents"), f"{label}.half_extents", errors,
                             f"{label}.half_extents")
            if center is not None and half is not None:
                try:
                    cuboid = Cuboid.from_center_half_extents(center, half)
                except ValueError as exc:
                    errors.append(f"{label}: {exc}")
        if cuboid is not None:
            obstacles.append(ObstacleSpec(object_id, cuboid))

    raw_weights = doc.get("weights", {"a": DEFAULT_WEIGHTS[0], "b": DEFAULT_WEIGHTS[1],
                                      "c": DEFAULT_WEIGHTS[2]})
    try:
        weights = (float(raw_weights["a"]), float(raw_weights["b"]), float(raw_weights["c"]))
        _collect(errors, all(w >= 0 for w in weights), "weights: must be nonnegative")
    except (TypeError, KeyError, ValueError):
        errors.append("weights: expected an object with numeric fields a, b, c")
        weights = DEFAULT_WEIGHTS

    horizons = doc.get("horizons", {}) or {}
    try:
        horizon_assess = int(horizons.get("assess", DEFAULT_HORIZON_ASSESS))
        horizon_search = int(horizons.get("search", DEFAULT_HORIZON_SEARCH))
        _collect(errors, horizon_assess >= 1 and horizon_search >= 1,
                 "horizons: must be at least 1")
    except (TypeError, ValueError):
        errors.append("horizons: expected integer fields assess, search")
        horizon_assess, horizon_search = DEFAULT_HORIZON_ASSESS, DEFAULT_HORIZON_SEARCH

    if errors:
        raise ScenarioError(errors)

    # Cross-body invariants; all offenses reported together.
    for spec in objects:
        b_lo, b_hi = spec.cuboid.box_bounds()
        if np.any(b_lo < lo - 1e-9) or np.any(b_hi > hi + 1e-9):
            errors.append(f"objects[{spec.object_id}]: body extends outside bounds")
    for spec in obstacles:
        try:
            b_lo, b_hi = spec.cuboid.box_bounds()
            if np.any(b_lo < lo - 1e-9) or np.any(b_hi > hi + 1e-9):
                errors.append(f"obstacles[{spec.object_id}]: body extends outside bounds")
        except ValueError:
            pass  # general polyhedra are bounded but not axis-aligned
    pos = initial.position
    if np.any(pos < lo - 1e-9) or np.any(pos > hi + 1e-9):
        errors.append("agent.position: initial position outside bounds")
    for spec in objects:
        if spec.cuboid.max_face_violation(pos) <= 1e-9:
            errors.append(f"agent.position: initial position inside object {spec.object_id}")
    for spec in obstacles:
        if spec.cuboid.max_face_violation(pos) <= 1e-9:
            errors.append(f"agent.position: initial position inside obstacle {spec.object_id}")
    if errors:
        raise ScenarioError(errors)

    raw = _materialize(name, lo, hi, params, initial, objects, obstacles, weights,
                       horizon_assess, horizon_search, epsilon, depth_fraction, big_m)
    return Scenario(name, lo, hi, params, initial, objects, obstacles, weights,
                    horizon_assess, horizon_search, epsilon, depth_fraction, big_m, raw)


def _materialize(name, lo, hi, params, initial, objects, obstacles, weights,
                 horizon_assess, horizon_search, epsilon, depth_fraction, big_m) -> dict:
    """Scenario document with every default filled in (digest source)."""
    return {
        "schema": SCHEMA,
        "name": name,
        "bounds": {"min": lo.tolist(), "max": hi.tolist()},
        "agent": {
            "dt": params.dt,
            "mass": params.mass,
            "drag": params.drag,
            "u_max": params.u_max,
            "v_max": params.v_max,
            "fov_angle_deg": float(np.rad2deg(params.fov_angle)),
            "position": initial.position.tolist(),
            "velocity": initial.velocity.tolist(),
        },
        "objects": [
            {
                "id": spec.object_id,
                "center": spec.cuboid.centroid().tolist(),
                "half_extents": ((spec.cuboid.box_bounds()[1]
                                  - spec.cuboid.box_bounds()[0]) / 2.0).tolist(),
                "faces": list(spec.faces),
                "standoff": spec.standoff,
                "clearance": spec.clearance,
            }
            for spec in objects
        ],
        "obstacles": [
            {
                "id": spec.object_id,
                "normals": spec.cuboid.a_rows.tolist(),
                "offsets": spec.cuboid.b.tolist(),
            }
            for spec in obstacles
        ],
        "weights": {"a": weights[0], "b": weights[1], "c": weights[2]},
        "horizons": {"assess": horizon_assess, "search": horizon_search},
        "overrides": {"big_m": big_m, "epsilon": epsilon, "depth_fraction": depth_fraction},
    }


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# -- exports -------------------------------------------------------------------


def export_trajectory(plan: Plan, path) -> None:
    """One row per executed step: the state reached and the force applied."""
    lines = [TRAJECTORY_HEADER]
    for t, (control, state) in enumerate(plan.steps, start=1):
        fields = [str(t)]
        fields.extend(repr(float(v)) for v in state.position)
        fields.extend(repr(float(v)) for v in state.velocity)
        fields.extend(repr(float(v)) for v in control.force)
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_trajectory(path) -> np.ndarray:
    """(steps, 10) array of t, position, velocity, force rows."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != TRAJECTORY_HEADER:
        raise ValueError(f"unrecognized trajectory header in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 10:
            raise ValueError(f"malformed trajectory row: {line!r}")
        rows.append([float(p) for p in parts])
    return np.array(rows).reshape(len(rows), 10)


def export_report(report: "CoverageReport", path) -> None:
    """Canonical JSON coverage report; excludes measured wall times so
    repeated seeded runs export identical bytes."""
    doc = {
        "schema": "searchplan-report/1",
        "scenario_digest": report.scenario_digest,
        "termination": report.termination,
        "steps_used": report.steps_used,
        "visited": report.visited_count,
        "total_cuboids": len(report.visit_steps),
        "visits": [
            {
                "cuboid": n,
                "object": tag[0],
                "face": tag[1],
                "cell": tag[2],
                "step": step,
            }
            for n, (tag, step) in enumerate(zip(report.cuboid_tags, report.visit_steps))
            if step is not None
        ],
        "faces_covered": report.faces_covered,
        "faces_selected": report.faces_selected,
        "collisions": {
            "states": [
                {"t": v.t, "body": v.body, "clearance": v.clearance}
                for v in report.state_collisions
            ],
            "segments": [
                {"t": v.t, "fraction": v.fraction, "body": v.body, "clearance": v.clearance}
                for v in report.segment_collisions
            ],
        },
        "bound_violations": [
            {"t": v.t, "kind": v.kind, "axis": v.axis, "value": v.value, "limit": v.limit}
            for v in report.bound_violations
        ],
        "steps": [
            {
                "step": r.step,
                "nodes": r.nodes,
                "objective": None if r.objective != r.objective else r.objective,
                "status": r.solver_status,
                "new_visits": r.new_visits,
            }
            for r in report.step_records
        ],
        "total_nodes": report.total_nodes,
    }
    _write_json(doc, path)


def export_assessment_report(result: "AssessmentResult", scenario_digest: str, path) -> None:
    doc = {
        "schema": "searchplan-assessment-report/1",
        "scenario_digest": scenario_digest,
        "status": result.solution.status,
        "objective": result.objective,
        "visit_times": result.visit_times,
        "miss_distances": result.miss_distances,
        "nodes": result.solution.nodes_explored,
    }
    _write_json(doc, path)


def export_study(rows, seed: int, path) -> None:
    """Deterministic study table; measured runtimes stay out of the file."""
    lines = ["waypoints,trials,mean_objective,mean_nodes"]
    for row in rows:
        lines.append(
            f"{row.waypoint_count},{row.trials},{repr(row.mean_objective)},{repr(row.mean_nodes)}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")

"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 1 infeasible or incomplete mission, 2 input error.
All file outputs are deterministic for identical arguments and scenario.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import mip
from .assessment import AssessmentError, solve_assessment
from .harness import (
    DEFAULT_ASSESS_NODE_BUDGET,
    DEFAULT_SEARCH_NODE_BUDGET,
    RunConfig,
    assessment_problem_for,
    coverage_cuboids_for,
    run_search_mission,
    waypoint_scaling_study,
)
from .scenario_io import (
    Scenario,
    ScenarioError,
    export_assessment_report,
    export_report,
    export_study,
    export_trajectory,
    load_scenario,
)
from .search import SearchProblem, VisitedMap, build_search_model, count_binaries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="searchplan",
        description="Two-stage mixed-integer search planning for a 3D agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True, out=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        if out:
            p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--horizon", type=int, default=None,
                       help="override the stage horizon from the scenario")
        p.add_argument("--time-limit", type=float, default=None,
                       help="per-solve wall-clock limit in seconds")
        p.add_argument("--node-limit", type=int, default=None,
                       help="per-solve node budget (deterministic)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--verbose", action="store_true")

    p_assess = sub.add_parser("assess", help="solve the waypoint pass (stage one)")
    common(p_assess)

    p_search = sub.add_parser("search", help="run the rolling-horizon coverage mission")
    common(p_search)
    p_search.add_argument("--max-steps", type=int, default=200)

    p_run = sub.add_parser("run", help="both stages back to back")
    common(p_run)
    p_run.add_argument("--max-steps", type=int, default=200)

    p_check = sub.add_parser("check", help="validate a scenario and report model sizes")
    common(p_check, out=False)

    p_study = sub.add_parser("study", help="waypoint scaling study (stage one)")
    common(p_study, scenario=False)
    p_study.add_argument("--counts", default="2,4,6",
                         help="comma-separated waypoint counts")
    p_study.add_argument("--trials", type=int, default=5)
    p_study.add_argument("--area", default="200x200x50",
                         help="box dimensions, e.g. 200x200x50")
    return parser


def _limits(args, default_nodes: int) -> mip.SolveLimits:
    node_limit = args.node_limit if args.node_limit is not None else default_nodes
    if args.time_limit is not None and args.node_limit is None:
        node_limit = None  # an explicit time limit replaces the default budget
    return mip.SolveLimits(time_limit=args.time_limit, node_limit=node_limit)


def _load(args) -> Scenario:
    return load_scenario(args.scenario)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_assess(args) -> int:
    scenario = _load(args)
    out = _outdir(args)
    problem = assessment_problem_for(scenario, args.horizon)
    t0 = time.perf_counter()
    result = solve_assessment(problem, _limits(args, DEFAULT_ASSESS_NODE_BUDGET))
    wall = time.perf_counter() - t0
    export_trajectory(result.plan, out / "assessment_trajectory.csv")
    export_assessment_report(result, scenario.digest(), out / "assessment_report.json")
    n = len(problem.waypoints)
    print(f"assess: waypoints {n}/{n} scheduled, objective {result.objective:.6f}, "
          f"nodes {result.solution.nodes_explored}, wall {wall:.1f}s")
    return 0


def _cmd_search(args) -> int:
    scenario = _load(args)
    if args.horizon is not None:
        scenario.horizon_search = args.horizon
    out = _outdir(args)
    config = RunConfig(scenario, stage="search", max_steps=args.max_steps,
                       limits=_limits(args, DEFAULT_SEARCH_NODE_BUDGET))
    t0 = time.perf_counter()
    plan, report = run_search_mission(config)
    wall = time.perf_counter() - t0
    export_trajectory(plan, out / "search_trajectory.csv")
    export_report(report, out / "search_report.json")
    total = len(report.visit_steps)
    print(f"search: visits {report.visited_count}/{total}, steps {report.steps_used}, "
          f"nodes {report.total_nodes}, wall {wall:.1f}s")
    return 0 if report.complete else 1


def _cmd_run(args) -> int:
    code = _cmd_assess(args)
    if code != 0:
        return code
    return _cmd_search(args)


def _cmd_check(args) -> int:
    scenario = _load(args)
    waypoint_count = len(scenario.objects)
    horizon_a = args.horizon or scenario.horizon_assess
    horizon_s = args.horizon or scenario.horizon_search
    assess_model = None
    from .assessment import build_assessment_model  # local to keep startup light

    problem = assessment_problem_for(scenario, horizon_a)
    assess_model = build_assessment_model(problem)

    cuboids = coverage_cuboids_for(scenario)
    obstacles = [(ob.object_id, ob.cuboid) for ob in scenario.obstacles]
    search_problem = SearchProblem(
        scenario.initial_state, cuboids, obstacles, VisitedMap(len(cuboids)),
        scenario.weights, horizon_s, scenario.params,
        (scenario.bounds_lo, scenario.bounds_hi), scenario.epsilon, scenario.big_m,
    )
    model = build_search_model(search_problem)

    n = len(cuboids)
    t = horizon_s
    per_object = {}
    for cc in cuboids:
        per_object[cc.object_id] = per_object.get(cc.object_id, 0) + 1
    membership = sum(cc.cuboid.num_faces for cc in cuboids) * t
    containment = n * t
    uniqueness = n
    reward = n
    obstacle_faces = sum(ob.cuboid.num_faces for ob in scenario.obstacles) * t
    formula = count_binaries(len(scenario.objects), list(per_object.values()),
                             len(scenario.obstacles), t)

    print(f"scenario: {scenario.name} (digest {scenario.digest()[:12]})")
    print(f"coverage cuboids: {n} " +
          "(" + ", ".join(f"{k}: {v}" for k, v in per_object.items()) + ")")
    print(f"assessment model: T={horizon_a}, waypoints={waypoint_count}, "
          f"binaries={assess_model.num_binaries}, variables={assess_model.num_variables}, "
          f"rows={len(assess_model.constraints)}")
    print(f"search model: T={t}, cuboids={n}, obstacles={len(scenario.obstacles)}, "
          f"variables={model.num_variables}, rows={len(model.constraints)}")
    print(f"binaries: {model.num_binaries} (membership {membership}, containment {containment}, "
          f"uniqueness {uniqueness}, reward {reward}, obstacle {obstacle_faces})")
    if model.num_binaries != formula:
        print(f"warning: binary count {model.num_binaries} != formula value {formula}")
        return 1
    return 0


def _cmd_study(args) -> int:
    out = _outdir(args)
    try:
        counts = [int(c) for c in args.counts.split(",") if c.strip()]
        dims = [float(d) for d in args.area.lower().split("x")]
    except ValueError:
        print("study: --counts must be integers and --area WxLxH", file=sys.stderr)
        return 2
    if len(dims) != 3 or not counts:
        print("study: --counts must be nonempty and --area WxLxH", file=sys.stderr)
        return 2
    horizon = args.horizon or 50
    node_limit = args.node_limit if args.node_limit is not None else DEFAULT_ASSESS_NODE_BUDGET
    rows = waypoint_scaling_study(dims, counts, args.trials, horizon, args.seed,
                                  node_limit=node_limit, workers=args.workers)
    export_study(rows, args.seed, out / "study.csv")
    for row in rows:
        print(f"study: waypoints {row.waypoint_count}, trials {row.trials}, "
              f"mean objective {row.mean_objective:.4f}, mean nodes {row.mean_nodes:.1f}, "
              f"mean runtime {row.mean_runtime:.2f}s")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "assess": _cmd_assess,
        "search": _cmd_search,
        "run": _cmd_run,
        "check": _cmd_check,
        "study": _cmd_study,
    }
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        for line in exc.errors:
            print(f"scenario error: {line}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except AssessmentError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Deterministic best-bound branch and bound over continuous relaxations.

Node selection is best-bound with insertion-order tie breaking; branching
picks the most fractional binary with lowest-index tie breaking. Incumbents
are always produced by re-solving with every binary pinned, so reported
binaries are exactly integral. A bounded diving heuristic hunts for early
incumbents; callers with structural knowledge can hand in a warm start.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import FEASIBILITY_TOL, INTEGRALITY_TOL, MipModel, MipSolution, validate
from .relaxation import INFEASIBLE, OPTIMAL, UNBOUNDED, RelaxationEngine

DEFAULT_REL_GAP = 1e-6

# Diving runs at the root and then every DIVE_INTERVAL nodes, capped so the
# heuristic can never dominate the node budget.
DIVE_INTERVAL = 100
DIVE_MAX_ROUNDS = 24

# A caller-supplied primal heuristic runs this often once an incumbent
# exists (and at every node before that).
PRIMAL_INTERVAL = 10


@dataclass
class SolveLimits:
    """Search budget: wall-clock seconds, node count and optimality gap."""

    time_limit: float | None = None
    node_limit: int | None = None
    rel_gap: float = DEFAULT_REL_GAP


class _Incumbent:
    __slots__ = ("values", "objective")

    def __init__(self, values: np.ndarray, objective: float):
        self.values = values
        self.objective = objective


def solve(model: MipModel, limits: SolveLimits | None = None, warm_start=None,
          dive: bool = True, primal_heuristic=None) -> MipSolution:
    """Minimize the model, returning a proven-optimal solution when the gap
    closes within ``limits.rel_gap`` and the best incumbent otherwise.

    ``primal_heuristic`` may map a relaxation point to a full binary
    assignment (or None); callers with structural knowledge use it to turn
    fractional nodes into integer-feasible candidates.
    """
    limits = limits or SolveLimits()
    start = time.perf_counter()
    engine = RelaxationEngine(model)
    binaries = model.binary_indices
    incumbent: _Incumbent | None = None
    nodes_explored = 0
    heuristic_solves = 0
    best_bound = -math.inf
    tried_candidates: set[tuple[int, ...]] = set()

    def gap_tolerance(objective: float) -> float:
        return limits.rel_gap * max(1.0, abs(objective))

    def elapsed() -> float:
        return time.perf_counter() - start

    def out_of_budget() -> bool:
        if limits.node_limit is not None and nodes_explored >= limits.node_limit:
            return True
        if limits.time_limit is not None and elapsed() >= limits.time_limit:
            return True
        return False

    def try_incumbent(fixed_values: dict[int, float]) -> bool:
        """Pin every binary, re-solve, and adopt the point if it wins."""
        nonlocal incumbent, heuristic_solves
        signature = tuple(int(round(fixed_values[i])) for i in binaries)
        if signature in tried_candidates:
            return False
        tried_candidates.add(signature)
        heuristic_solves += 1
        res = engine.solve(fixed_values)
        if res.status != OPTIMAL:
            return False
        values = np.asarray(res.x).copy()
        for var, value in fixed_values.items():
            values[var] = value
        objective = model.objective_value(values)
        if incumbent is not None and objective >= incumbent.objective:
            return False
        if validate(model, values, FEASIBILITY_TOL):
            return False
        incumbent = _Incumbent(values, objective)
        return True

    def rounded(x: np.ndarray) -> dict[int, float]:
        return {i: float(round(np.clip(x[i], 0.0, 1.0))) for i in binaries}

    def dive_from(fixed: dict[int, int], x: np.ndarray) -> None:
        """Round-up dive: drive the most fractional binary to 1 each round.

        Pushing up lets assignment-style equality rows zero out the rest of
        their group exactly, so dives finish in few rounds; an infeasible
        push is flipped once before giving up.
        """
        nonlocal heuristic_solves
        trail = dict(fixed)
        point = x
        for _ in range(DIVE_MAX_ROUNDS):
            fractional = [
                i for i in binaries
                if i not in trail and min(point[i], 1.0 - point[i]) > INTEGRALITY_TOL
            ]
            if not fractional:
                try_incumbent(rounded_with(trail, point))
                return
            target = max(fractional, key=lambda i: (min(point[i], 1.0 - point[i]), -i))
            trail[target] = 1
            heuristic_solves += 1
            res = engine.solve(trail)
            if res.status != OPTIMAL:
                trail[target] = 0
                heuristic_solves += 1
                res = engine.solve(trail)
                if res.status != OPTIMAL:
                    return
            point = res.x

    def rounded_with(fixed: dict[int, int], x: np.ndarray) -> dict[int, float]:
        out = rounded(x)
        out.update({i: float(v) for i, v in fixed.items()})
        return out

    if warm_start is not None:
        missing = [i for i in binaries if i not in warm_start]
        if missing:
            raise ValueError(f"warm start must assign every binary; missing {missing[:5]}")
        try_incumbent({i: float(round(warm_start[i])) for i in binaries})

    # Min-heap of (parent bound, insertion order, fixed binaries).
    counter = 0
    heap: list[tuple[float, int, dict[int, int]]] = [(-math.inf, counter, {})]
    limit_hit = False

    while heap:
        if out_of_budget():
            limit_hit = True
            break
        key, _, fixed = heapq.heappop(heap)
        best_bound = max(best_bound, key)
        if incumbent is not None and incumbent.objective - best_bound <= gap_tolerance(incumbent.objective):
            best_bound = incumbent.objective
            break
        nodes_explored += 1
        res = engine.solve(fixed)
        if res.status == UNBOUNDED:
            raise ValueError("relaxation is unbounded; the objective has no finite minimum")
        if res.status == INFEASIBLE:
            continue
        bound = max(key, res.objective)
        if incumbent is not None and incumbent.objective - bound <= gap_tolerance(incumbent.objective):
            continue
        x = res.x
        fractional = [
            i for i in binaries
            if i not in fixed and min(x[i], 1.0 - x[i]) > INTEGRALITY_TOL
        ]
        if not fractional:
            try_incumbent(rounded_with(fixed, x))
            continue
        if primal_heuristic is not None and (
                incumbent is None or nodes_explored == 1
                or nodes_explored % PRIMAL_INTERVAL == 0):
            candidate = primal_heuristic(x)
            if candidate is not None:
                try_incumbent({i: float(round(candidate[i])) for i in binaries})
        if dive and (nodes_explored == 1 or nodes_explored % DIVE_INTERVAL == 0):
            dive_from(fixed, x)
        if incumbent is not None and incumbent.objective - bound <= gap_tolerance(incumbent.objective):
            continue
        # Most fractional first; ties break toward the lowest variable index.
        target = max(fractional, key=lambda i: (min(x[i], 1.0 - x[i]), -i))
        near = int(round(x[target]))
        for value in (near, 1 - near):
            counter += 1
            child = dict(fixed)
            child[target] = value
            heapq.heappush(heap, (bound, counter, child))

    wall = elapsed()
    if incumbent is None:
        status = "time_limit" if (limit_hit or heap) else "infeasible"
        return MipSolution(status, None, None, nodes_explored, wall,
                           best_bound, math.inf, heuristic_solves)
    gap = max(0.0, incumbent.objective - best_bound)
    if limit_hit and gap > gap_tolerance(incumbent.objective):
        status = "time_limit"
    else:
        status = "optimal"
        best_bound = incumbent.objective
        gap = 0.0
    return MipSolution(status, incumbent.values, incumbent.objective, nodes_explored,
                       wall, best_bound, gap, heuristic_solves)

"""Iterative Risk Allocation.

The lower stage solves the deterministic-equivalent MILP for a fixed
allocation.  The upper stage classifies each chance constraint as active
(``|delta - delta_min| <= eta``) or inactive, shrinks inactive bounds toward
their minimum (``delta <- alpha * delta + (1 - alpha) * delta_min``) and hands
the released risk to the active ones in equal shares.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .allocation import (
    MAX_DELTA,
    ConstraintKey,
    RiskAllocation,
    TrajectorySolution,
    uniform_allocation,
)
from .constraints import Box, ConvexRegion, TemporalObstacle, tail_probability
from .dynamics import GaussianState
from .milp import SolverConfig, Status, build_lower_stage, constraint_structure, extract_solution, solve_milp

logger = logging.getLogger(__name__)

__all__ = [
    "Classification",
    "InfeasibleProblem",
    "IraConfig",
    "RiskAllocation",
    "TrajectorySolution",
    "classify",
    "delta_min",
    "fast_ira",
    "ira",
    "lower_stage_solve",
    "reallocate",
    "uniform_allocation",
]


class InfeasibleProblem(RuntimeError):
    def __init__(self, message: str, status: Status = Status.INFEASIBLE):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class IraConfig:
    eta: float = 1e-4
    alpha: float = 0.7
    max_iters: int = 20
    conv_rel: float = 1e-4  # stop when improvement < conv_rel * (1 + |J|)
    fast_resolve: bool = True  # fastIRA re-solves after its reallocation
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def conv_eps(self, objective: float) -> float:
        return self.conv_rel * (1.0 + abs(objective))


@dataclass(frozen=True)
class Classification:
    active: frozenset
    inactive: frozenset

    def is_active(self, key: ConstraintKey) -> bool:
        return key in self.active


def delta_min(solution: TrajectorySolution, key: ConstraintKey) -> float:
    """Smallest risk bound the solution satisfies for one disjunction.

    Only enabled edges count; the disjunction holds as soon as one of them
    does, so the requirement is the smallest residual risk among them.
    """
    risks = [tail_probability(e.g - e.value, e.var) for e in solution.edges[key] if e.enabled]
    return min(risks) if risks else 0.0


def classify(
    solution: TrajectorySolution, allocation: RiskAllocation, eta: float
) -> tuple[Classification, dict[ConstraintKey, float]]:
    mins = {key: delta_min(solution, key) for key in allocation.keys()}
    active = frozenset(k for k in allocation.keys() if abs(allocation[k] - mins[k]) <= eta)
    inactive = frozenset(allocation.keys()) - active
    return Classification(active, inactive), mins


def reallocate(
    allocation: RiskAllocation,
    classification: Classification,
    delta_mins: dict[ConstraintKey, float],
    alpha: float,
) -> tuple[RiskAllocation, bool]:
    """Move risk from inactive to active constraints.

    Returns the new allocation and whether anything changed.
    """
    if not classification.inactive:
        return allocation, False
    new = dict(allocation.deltas)
    for key in classification.inactive:
        d = alpha * new[key] + (1.0 - alpha) * max(delta_mins[key], 0.0)
        new[key] = min(max(d, math.ulp(0.0)), MAX_DELTA)
    active = sorted(classification.active)
    if active:
        released = allocation.budget - math.fsum(new.values())
        if released > 0:
            share = released / len(active)
            for key in active:
                new[key] = min(new[key] + share, MAX_DELTA)
    out = RiskAllocation(new, allocation.budget)
    # guard the budget against rounding in the equal split
    while out.total() > allocation.budget and active:
        excess = out.total() - allocation.budget
        for key in active:
            new[key] = max(new[key] - excess, math.ulp(0.0))
        out = RiskAllocation(new, allocation.budget)
    return out, new != allocation.deltas


@dataclass
class _Problem:
    subset: Sequence
    obstacles: Sequence[ConvexRegion]
    temporal: Sequence[TemporalObstacle]
    horizon: int
    starts: dict[int, GaussianState] | None = None
    start_time: int = 0
    world: Box | None = None
    soft_goal: bool = False
    pairwise: bool | None = None

    def structure(self) -> list[ConstraintKey]:
        return constraint_structure(
            self.subset, self.obstacles, self.temporal, self.horizon,
            start_time=self.start_time, pairwise=self.pairwise,
        )


def lower_stage_solve(problem: _Problem, allocation: RiskAllocation | None, solver: SolverConfig) -> TrajectorySolution:
    stage = build_lower_stage(
        problem.subset,
        problem.obstacles,
        problem.temporal,
        problem.horizon,
        allocation,
        starts=problem.starts,
        start_time=problem.start_time,
        world=problem.world,
        soft_goal=problem.soft_goal,
        pairwise=problem.pairwise,
    )
    sol = solve_milp(stage.model, solver)
    return extract_solution(stage, sol)


def _solved(sol: TrajectorySolution) -> bool:
    # an incumbent found before the node budget ran out is still usable
    return sol.status in (Status.OPTIMAL, Status.ITER_LIMIT) and bool(sol.means)


def _trace_row(it: int, sol: TrajectorySolution, alloc: RiskAllocation | None, n_active: int) -> dict:
    return {
        "iteration": it,
        "objective": sol.objective,
        "risk_sum": alloc.total() if alloc is not None else 0.0,
        "active": n_active,
    }


def ira(
    subset: Sequence,
    obstacles: Sequence[ConvexRegion],
    temporal: Sequence[TemporalObstacle],
    horizon: int,
    budget: float,
    config: IraConfig | None = None,
    *,
    starts: dict[int, GaussianState] | None = None,
    start_time: int = 0,
    world: Box | None = None,
    soft_goal: bool = False,
    pairwise: bool | None = None,
) -> TrajectorySolution:
    """Two-stage IRA loop; returns the best solution found with its trace."""
    cfg = config or IraConfig()
    if budget <= 0:
        raise ValueError("budget must be positive")
    problem = _Problem(subset, obstacles, temporal, horizon, starts, start_time, world, soft_goal, pairwise)
    structure = problem.structure()
    alloc = uniform_allocation(structure, budget) if structure else None
    trace: list[dict] = []

    best = lower_stage_solve(problem, alloc, cfg.solver)
    if not _solved(best):
        raise InfeasibleProblem("lower stage infeasible under the uniform allocation", best.status)
    if alloc is None:
        best.trace = [_trace_row(0, best, None, 0)]
        return best

    current = best
    for it in range(cfg.max_iters):
        cls, mins = classify(current, alloc, cfg.eta)
        trace.append(_trace_row(it, current, alloc, len(cls.active)))
        if it + 1 >= cfg.max_iters:
            break
        new_alloc, changed = reallocate(alloc, cls, mins, cfg.alpha)
        if not changed:
            break
        candidate = lower_stage_solve(problem, new_alloc, cfg.solver)
        if not _solved(candidate):
            logger.info("IRA iteration %d infeasible; keeping previous allocation", it + 1)
            break
        improvement = current.objective - candidate.objective
        alloc, current = new_alloc, candidate
        if current.objective < best.objective:
            best = current
        if improvement < cfg.conv_eps(current.objective):
            cls, _ = classify(current, alloc, cfg.eta)
            trace.append(_trace_row(it + 1, current, alloc, len(cls.active)))
            break
    best.trace = trace
    return best


def fast_ira(
    vehicle,
    temporal: Sequence[TemporalObstacle],
    obstacles: Sequence[ConvexRegion],
    horizon_remaining: int,
    budget: float,
    config: IraConfig | None = None,
    *,
    start: GaussianState | None = None,
    start_time: int = 0,
    world: Box | None = None,
    soft_goal: bool = False,
) -> tuple[TrajectorySolution, RiskAllocation | None]:
    """Single IRA pass for one vehicle: solve, reallocate, (re-)solve."""
    cfg = config or IraConfig()
    if budget <= 0:
        raise ValueError("budget must be positive")
    if horizon_remaining < 1:
        raise ValueError("horizon_remaining must be >= 1")
    starts = {vehicle.id: start} if start is not None else None
    problem = _Problem([vehicle], obstacles, temporal, horizon_remaining, starts, start_time, world, soft_goal, False)
    structure = problem.structure()
    alloc = uniform_allocation(structure, budget) if structure else None
    first = lower_stage_solve(problem, alloc, cfg.solver)
    if not _solved(first):
        raise InfeasibleProblem("fastIRA subproblem infeasible", first.status)
    if alloc is None:
        return first, None
    cls, mins = classify(first, alloc, cfg.eta)
    new_alloc, changed = reallocate(alloc, cls, mins, cfg.alpha)
    first.trace = [_trace_row(0, first, alloc, len(cls.active))]
    if not changed:
        return first, alloc
    if not cfg.fast_resolve:
        return first, alloc
    second = lower_stage_solve(problem, new_alloc, cfg.solver)
    if not _solved(second):
        return first, alloc
    second.trace = first.trace + [_trace_row(1, second, new_alloc, -1)]
    return second, new_alloc


def with_solver(config: IraConfig, solver: SolverConfig) -> IraConfig:
    return replace(config, solver=solver)

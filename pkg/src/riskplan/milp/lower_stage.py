"""Deterministic-equivalent MILP for a fixed risk allocation.

Per vehicle the model carries nominal states and controls tied by the mean
dynamics, control bounds, world bounds on positions and final-step goal
containment.  Every KEEP_OUT object (static obstacle, another vehicle's
temporal obstacle, or another vehicle of the same problem) becomes, at each
step ``k = 1..H``, a big-M disjunction over its edges::

    h . p <= tighten(h, cov, delta) + M b      for each edge
    sum(b) <= L - 1

The objective is the L1 control effort, linearized with ``t >= |u|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..allocation import ConstraintKey, EdgeStat, RiskAllocation, TrajectorySolution
from ..constraints import Box, ConvexRegion, Halfspace, TemporalObstacle, margin, square_region
from ..dynamics import GaussianState, covariance_sequence
from .model import MilpModel, MilpSolution, Sense, Status, VarTag

BIG_M = 1e5
GOAL_PENALTY = 1e3


class AllocationGap(KeyError):
    pass


@dataclass
class _Object:
    key: ConstraintKey
    edges: list[Halfspace]
    pos_vars: list[tuple[np.ndarray, float]]  # (position var indices, sign)
    cov: np.ndarray  # 2x2 position covariance of the tested quantity
    rhs: list[float] = field(default_factory=list)  # tightened offsets
    binaries: list[int] = field(default_factory=list)


@dataclass
class LowerStage:
    model: MilpModel
    vehicles: list
    horizon: int
    start_time: int
    state_idx: dict[int, np.ndarray]
    control_idx: dict[int, np.ndarray]
    covs: dict[int, list[np.ndarray]]
    objects: list[_Object]
    allocation: RiskAllocation | None
    soft_goal: bool
    effort_vars: list[int]


def obstacle_label(j: int) -> str:
    return f"obs{j}"


def vehicle_label(j: int) -> str:
    return f"veh{j}"


def label_owner(label: str) -> tuple[str, int]:
    return label[:3], int(label[3:])


def pair_region(distance: float) -> ConvexRegion:
    """Square of half-width ``distance`` around the origin of relative position."""
    return square_region(np.zeros(2), distance)


def _avoidance_specs(
    subset: Sequence,
    obstacles: Sequence[ConvexRegion],
    temporal: Sequence[TemporalObstacle],
    horizon: int,
    start_time: int,
    pairwise: bool,
):
    """Yield ``(key, region, member ids, signs)`` for every disjunction."""
    ids = [v.id for v in subset]
    for v in subset:
        for k in range(1, horizon + 1):
            for j, region in enumerate(obstacles):
                yield ConstraintKey(v.id, obstacle_label(j), k), region, (v.id,), (1.0,)
            for tob in temporal:
                if tob.owner in ids:
                    continue
                yield ConstraintKey(v.id, vehicle_label(tob.owner), k), tob.region_at(start_time + k), (v.id,), (1.0,)
    if pairwise and len(subset) > 1:
        for a in range(len(subset)):
            for b in range(a + 1, len(subset)):
                va, vb = subset[a], subset[b]
                region = pair_region(va.radius + vb.radius)
                for k in range(1, horizon + 1):
                    key = ConstraintKey(va.id, vehicle_label(vb.id), k)
                    yield key, region, (va.id, vb.id), (1.0, -1.0)


def constraint_structure(
    subset: Sequence,
    obstacles: Sequence[ConvexRegion],
    temporal: Sequence[TemporalObstacle] = (),
    horizon: int = 10,
    *,
    start_time: int = 0,
    pairwise: bool | None = None,
) -> list[ConstraintKey]:
    pairwise = len(subset) > 1 if pairwise is None else pairwise
    return [s[0] for s in _avoidance_specs(subset, obstacles, temporal, horizon, start_time, pairwise)]


def build_lower_stage(
    subset: Sequence,
    obstacles: Sequence[ConvexRegion],
    temporal: Sequence[TemporalObstacle],
    horizon: int,
    allocation: RiskAllocation | None,
    *,
    starts: dict[int, GaussianState] | None = None,
    start_time: int = 0,
    world: Box | None = None,
    big_m: float = BIG_M,
    soft_goal: bool = False,
    goal_penalty: float = GOAL_PENALTY,
    pairwise: bool | None = None,
) -> LowerStage:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pairwise = len(subset) > 1 if pairwise is None else pairwise
    starts = starts or {}
    model = MilpModel()
    state_idx: dict[int, np.ndarray] = {}
    control_idx: dict[int, np.ndarray] = {}
    covs: dict[int, list[np.ndarray]] = {}
    effort_vars: list[int] = []

    for v in subset:
        n, m = v.n, v.m
        if v.A.shape != (n, n) or v.B.shape[0] != n:
            raise ValueError(f"vehicle {v.id}: dimension mismatch between A and B")
        s0 = starts.get(v.id)
        mean0 = np.asarray(v.x0_mean if s0 is None else s0.mean, dtype=float)
        cov0 = np.asarray(v.x0_cov if s0 is None else s0.cov, dtype=float)
        if mean0.shape != (n,):
            raise ValueError(f"vehicle {v.id}: start mean has wrong dimension")
        covs[v.id] = covariance_sequence(v, cov0, horizon)

        X = np.empty((horizon + 1, n), dtype=np.int64)
        for k in range(horizon + 1):
            for c in range(n):
                lo, hi = -math.inf, math.inf
                if k == 0:
                    lo = hi = mean0[c]
                elif world is not None and c < 2:
                    lo, hi = world.lo[c], world.hi[c]
                if k == horizon and c < 2 and not soft_goal:
                    lo, hi = max(lo, v.goal.lo[c]), min(hi, v.goal.hi[c])
                X[k, c] = model.add_var(lo, hi, tag=VarTag(v.id, k, "state", c))
        U = np.empty((horizon, m), dtype=np.int64)
        for k in range(horizon):
            for c in range(m):
                U[k, c] = model.add_var(v.u_min[c], v.u_max[c], tag=VarTag(v.id, k, "control", c))
                t = model.add_var(0.0, math.inf, 1.0, tag=VarTag(v.id, k, "abs", c))
                effort_vars.append(t)
                model.add_row({int(U[k, c]): 1.0, t: -1.0}, Sense.LE, 0.0, "abs+")
                model.add_row({int(U[k, c]): -1.0, t: -1.0}, Sense.LE, 0.0, "abs-")
        for k in range(horizon):
            for r in range(n):
                terms = {int(X[k + 1, r]): 1.0}
                for c in range(n):
                    if v.A[r, c] != 0.0:
                        terms[int(X[k, c])] = terms.get(int(X[k, c]), 0.0) - v.A[r, c]
                for c in range(m):
                    if v.B[r, c] != 0.0:
                        terms[int(U[k, c])] = -v.B[r, c]
                model.add_row(terms, Sense.EQ, 0.0, "dyn")
        if soft_goal:
            for c in range(2):
                s_hi = model.add_var(0.0, math.inf, goal_penalty, tag=VarTag(v.id, horizon, "slack", 2 * c))
                s_lo = model.add_var(0.0, math.inf, goal_penalty, tag=VarTag(v.id, horizon, "slack", 2 * c + 1))
                model.add_row({int(X[horizon, c]): 1.0, s_hi: -1.0}, Sense.LE, v.goal.hi[c], "goal")
                model.add_row({int(X[horizon, c]): -1.0, s_lo: -1.0}, Sense.LE, -v.goal.lo[c], "goal")
        state_idx[v.id] = X
        control_idx[v.id] = U

    objects: list[_Object] = []
    for key, region, members, signs in _avoidance_specs(
        subset, obstacles, temporal, horizon, start_time, pairwise
    ):
        if allocation is None or key not in allocation:
            raise AllocationGap(f"no risk bound allocated for {key}")
        delta = allocation[key]
        k = key.k
        cov = sum(covs[i][k][:2, :2] for i in members)
        pos = [(state_idx[i][k, :2], s) for i, s in zip(members, signs)]
        obj = _Object(key, list(region.edges), pos, cov)
        obj.rhs = [hs.g - margin(max(float(hs.h @ cov @ hs.h), 0.0), delta) for hs in region.edges]
        for e, (hs, rhs) in enumerate(zip(region.edges, obj.rhs)):
            b = model.add_var(binary=True, tag=VarTag(key.vehicle, k, "binary", e, key))
            obj.binaries.append(b)
            terms: dict[int, float] = {b: -big_m}
            for idx, s in pos:
                for c in range(2):
                    terms[int(idx[c])] = terms.get(int(idx[c]), 0.0) + s * hs.h[c]
            model.add_row(terms, Sense.LE, rhs, "avoid")
        model.add_row({b: 1.0 for b in obj.binaries}, Sense.LE, len(obj.binaries) - 1, "card")
        objects.append(obj)

    return LowerStage(
        model, list(subset), horizon, start_time, state_idx, control_idx, covs, objects,
        allocation, soft_goal, effort_vars,
    )


def extract_solution(stage: LowerStage, sol: MilpSolution) -> TrajectorySolution:
    """Turn a MILP solution into per-vehicle plans and per-edge risk statistics."""
    if sol.x is None:
        return TrajectorySolution(
            sol.status, [v.id for v in stage.vehicles], {}, {}, {}, {}, {}, stage.allocation,
            math.inf, math.inf, stage.start_time, stage.soft_goal,
        )
    x = sol.x
    means = {i: x[X] for i, X in stage.state_idx.items()}
    controls = {i: x[U] for i, U in stage.control_idx.items()}
    covs = {i: np.array(c) for i, c in stage.covs.items()}
    binaries: dict[ConstraintKey, np.ndarray] = {}
    edges: dict[ConstraintKey, list[EdgeStat]] = {}
    for obj in stage.objects:
        bvals = np.round(x[obj.binaries]).astype(int)
        binaries[obj.key] = bvals
        rel = sum(s * x[idx] for idx, s in obj.pos_vars)
        edges[obj.key] = [
            EdgeStat(hs.g, float(hs.h @ rel), max(float(hs.h @ obj.cov @ hs.h), 0.0), bool(b == 0))
            for hs, b in zip(obj.edges, bvals)
        ]
    effort = float(np.sum(x[stage.effort_vars])) if stage.effort_vars else 0.0
    return TrajectorySolution(
        sol.status, [v.id for v in stage.vehicles], means, covs, controls, binaries, edges,
        stage.allocation, sol.objective, effort, stage.start_time, stage.soft_goal,
    )


def infeasible_solution(stage: LowerStage, status: Status) -> TrajectorySolution:
    return extract_solution(stage, MilpSolution(status))

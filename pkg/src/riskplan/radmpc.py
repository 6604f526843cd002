"""Risk-aware decentralized receding-horizon approximation.

Every outer step the vehicles that are not yet in their goal are visited in a
freshly drawn random order.  Each one solves a single-vehicle fastIRA problem
against the static obstacles and the other vehicles' temporal obstacles, with
a whole-horizon budget of ``remaining pool / vehicles still moving``.  The
first control is executed, the vehicle's temporal obstacle is rebuilt from
the new plan and the risk allocated to the executed step leaves the pool.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .allocation import TrajectorySolution
from .constraints import tail_probability, temporal_obstacle
from .dynamics import GaussianState, in_goal, propagate_covariance, propagate_mean, rollout
from .ira import InfeasibleProblem, IraConfig, fast_ira
from .milp.lower_stage import label_owner
from .scenario import Scenario

logger = logging.getLogger(__name__)

MIN_BUDGET = 1e-15


@dataclass
class RiskPool:
    remaining: float
    active_vehicles: int
    exhausted: bool = False


def update_pool(pool: RiskPool, first_step_allocation) -> RiskPool:
    """Deduct the risk spent on an executed step; never goes below zero."""
    spent = float(np.sum(first_step_allocation)) if len(first_step_allocation) else 0.0
    remaining = pool.remaining - spent
    exhausted = pool.exhausted
    if remaining <= 0.0:
        if remaining < -1e-15:
            logger.warning("risk pool overdrawn by %.3g; clamping to zero", -remaining)
        remaining = 0.0
        exhausted = True
    return RiskPool(remaining, pool.active_vehicles, exhausted)


@dataclass(frozen=True)
class InteractionRecord:
    k: int
    vehicle: int
    owner: int
    p: float
    owner_version: int = 0


@dataclass
class InteractionLog:
    records: list[InteractionRecord] = field(default_factory=list)

    def add(self, rec: InteractionRecord) -> None:
        if rec.vehicle == rec.owner:
            raise ValueError("a vehicle cannot interact with itself")
        if not 0.0 <= rec.p <= 1.0:
            raise ValueError(f"probability outside [0, 1]: {rec.p}")
        self.records.append(rec)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def max_probability(self) -> float:
        return max((r.p for r in self.records), default=0.0)


@dataclass(frozen=True)
class RadmpcConfig:
    ira: IraConfig = field(default_factory=IraConfig)
    seed: int = 0
    step_factor: int = 3  # outer step budget = step_factor * T
    min_horizon: int = 2


@dataclass
class ApproxResult:
    means: dict[int, list[np.ndarray]]
    covs: dict[int, list[np.ndarray]]
    controls: dict[int, list[np.ndarray]]
    goal_step: dict[int, int | None]
    log: InteractionLog
    pool_history: list[float]
    trace: list[dict]
    converged: bool
    flags: list[tuple[int, int, str]] = field(default_factory=list)
    total_deducted: float = 0.0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "goal_step": {str(i): s for i, s in self.goal_step.items()},
            "means": {str(i): np.asarray(m).tolist() for i, m in self.means.items()},
            "controls": {str(i): np.asarray(u).tolist() for i, u in self.controls.items()},
            "interactions": [
                {"k": r.k, "vehicle": r.vehicle, "owner": r.owner, "p": r.p, "owner_version": r.owner_version}
                for r in self.log
            ],
            "pool_history": self.pool_history,
            "total_deducted": self.total_deducted,
            "flags": [list(f) for f in self.flags],
        }


def _first_step_probabilities(sol: TrajectorySolution) -> dict[int, float]:
    """Max collision probability over activated edges of each neighbour, step 1."""
    out: dict[int, float] = {}
    for key, edges in sol.edges.items():
        kind, owner = label_owner(key.obj)
        if key.k != 1 or kind != "veh":
            continue
        probs = [tail_probability(e.g - e.value, e.var) for e in edges if e.enabled]
        out[owner] = max(probs, default=0.0)
    return out


def radmpc(scenario: Scenario, config: RadmpcConfig | None = None) -> ApproxResult:
    cfg = config or RadmpcConfig()
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    N, T = scenario.N, scenario.T
    obstacles = scenario.obstacle_regions()
    world = scenario.world_bounds
    margins = {v.id: 2.0 * v.radius for v in scenario.vehicles}

    state = {v.id: GaussianState(v.x0_mean.astype(float), v.x0_cov.astype(float), 0) for v in scenario.vehicles}
    means = {i: [s.mean] for i, s in state.items()}
    covs = {i: [s.cov] for i, s in state.items()}
    controls: dict[int, list[np.ndarray]] = {i: [] for i in state}
    versions = {i: 0 for i in state}
    done = {v.id: in_goal(state[v.id], v) for v in scenario.vehicles}
    goal_step = {i: (0 if done[i] else None) for i in state}
    obstacles_t = {
        i: temporal_obstacle([state[i]], done[i], owner=i, start_time=0, margin=margins[i])
        for i in state
    }
    pool = RiskPool(scenario.delta_total, N - sum(done.values()))
    log = InteractionLog()
    pool_history = [pool.remaining]
    trace: list[dict] = []
    flags: list[tuple[int, int, str]] = []
    deducted = 0.0

    for k in range(cfg.step_factor * T):
        if all(done.values()):
            break
        order = rng.permutation(N)
        horizon = max(T - k, cfg.min_horizon)
        for i in (int(x) for x in order):
            if done[i]:
                continue
            v = scenario.vehicles[i]
            others = [obstacles_t[j] for j in sorted(obstacles_t) if j != i]
            seen = {ob.owner: ob.version for ob in others}
            budget = max(pool.remaining / max(pool.active_vehicles, 1), MIN_BUDGET)
            tic = time.perf_counter()
            sol, alloc, flag = _plan_step(v, others, obstacles, horizon, budget, cfg, state[i], k, world)
            wall = time.perf_counter() - tic

            if sol is None:
                u0 = np.clip(np.zeros(v.m), v.u_min, v.u_max)
                plan = rollout(v, [u0] * horizon, state[i].mean, state[i].cov, k)
                flags.append((k, i, flag))
            else:
                u0 = np.clip(sol.controls[i][0], v.u_min, v.u_max)
                plan = [GaussianState(sol.means[i][s], sol.covs[i][s], k + s) for s in range(horizon + 1)]
                if flag:
                    flags.append((k, i, flag))
                for owner, p in sorted(_first_step_probabilities(sol).items()):
                    log.add(InteractionRecord(k, i, owner, min(max(p, 0.0), 1.0), seen.get(owner, -1)))

            new = GaussianState(
                propagate_mean(v, state[i].mean, u0), propagate_covariance(v, state[i].cov), k + 1
            )
            state[i] = new
            means[i].append(new.mean)
            covs[i].append(new.cov)
            controls[i].append(u0)

            spent = alloc.at_step(1) if alloc is not None else []
            pool = update_pool(pool, spent)
            deducted += float(np.sum(spent)) if spent else 0.0
            pool_history.append(pool.remaining)

            versions[i] += 1
            if in_goal(new, v):
                done[i] = True
                goal_step[i] = k + 1
                pool = RiskPool(pool.remaining, pool.active_vehicles - 1, pool.exhausted)
                obstacles_t[i] = temporal_obstacle(
                    [new], True, owner=i, start_time=k + 1, margin=margins[i], version=versions[i]
                )
            else:
                obstacles_t[i] = temporal_obstacle(
                    plan, False, owner=i, start_time=k, margin=margins[i], version=versions[i]
                )
            trace.append(
                {
                    "k": k,
                    "vehicle": i,
                    "pool": pool.remaining,
                    "control": u0.tolist(),
                    "wall": wall,
                    "flag": flag,
                }
            )

    converged = all(done.values())
    if not converged:
        logger.warning("RADMPC did not bring every vehicle to its goal within %d steps", cfg.step_factor * T)
    return ApproxResult(
        means=means,
        covs=covs,
        controls=controls,
        goal_step=goal_step,
        log=log,
        pool_history=pool_history,
        trace=trace,
        converged=converged,
        flags=flags,
        total_deducted=deducted,
        wall_time=time.perf_counter() - t0,
    )


def _plan_step(v, others, obstacles, horizon, budget, cfg: RadmpcConfig, start, k, world):
    """fastIRA with the soft-goal retry; ``(None, None, flag)`` when both fail."""
    try:
        sol, alloc = fast_ira(
            v, others, obstacles, horizon, budget, cfg.ira, start=start, start_time=k, world=world
        )
        return sol, alloc, ""
    except InfeasibleProblem:
        pass
    try:
        sol, alloc = fast_ira(
            v, others, obstacles, horizon, budget, cfg.ira,
            start=start, start_time=k, world=world, soft_goal=True,
        )
        return sol, alloc, "soft_goal"
    except InfeasibleProblem:
        logger.info("vehicle %d infeasible at step %d; holding zero control", v.id, k)
        return None, None, "zero_control"


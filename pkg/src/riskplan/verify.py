"""Monte Carlo verification of fleet plans.

Rollouts draw the initial state and one disturbance per step, then run the
open-loop plan through the true dynamics.  A rollout fails if at any step two
vehicles are closer than the sum of their radii or a vehicle sits strictly
inside a static obstacle.  Rollouts are split into fixed-size shards, each
with its own seeded stream, so the counts do not depend on how shards are
scheduled.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coupling import FleetPlan
from .scenario import Scenario

DEFAULT_SHARD = 10_000


class PlanMismatch(ValueError):
    pass


@dataclass
class VerifyReport:
    n_rollouts: int
    failures: int
    pair_failures: int  # rollouts with any vehicle-vehicle collision
    obstacle_failures: int  # rollouts with any obstacle incursion
    pair_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    obstacle_counts: dict[tuple[int, int], int] = field(default_factory=dict)  # (vehicle, obstacle)
    obstacle_step_counts: list[int] = field(default_factory=list)
    pair_step_counts: list[int] = field(default_factory=list)
    per_state: bool = False

    @property
    def success_rate(self) -> float:
        return 1.0 - self.failures / self.n_rollouts if self.n_rollouts else 1.0

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.success_rate

    @property
    def std_error(self) -> float:
        """Binomial standard error of the failure-rate estimate."""
        p = self.failure_rate
        return math.sqrt(p * (1.0 - p) / self.n_rollouts) if self.n_rollouts else 0.0

    def passes(self, delta: float, n_sigma: float = 3.0) -> bool:
        """Combined failure rate within ``delta`` plus ``n_sigma`` binomial sigmas at ``delta``."""
        sigma = math.sqrt(delta * (1.0 - delta) / self.n_rollouts)
        return self.failure_rate <= delta + n_sigma * sigma

    def to_dict(self) -> dict:
        return {
            "n_rollouts": self.n_rollouts,
            "success_rate": self.success_rate,
            "std_error": self.std_error,
            "failures": self.failures,
            "pair_failures": self.pair_failures,
            "obstacle_failures": self.obstacle_failures,
            "pair_counts": [[i, j, c] for (i, j), c in sorted(self.pair_counts.items())],
            "obstacle_counts": [[i, j, c] for (i, j), c in sorted(self.obstacle_counts.items())],
            "obstacle_step_counts": list(self.obstacle_step_counts),
            "pair_step_counts": list(self.pair_step_counts),
            "per_state": self.per_state,
        }

    def table(self) -> list[tuple[str, int, float]]:
        """One ``(category, count, rate)`` row per failure category."""
        n = self.n_rollouts
        rows = [(f"pair {i}-{j}", c, c / n) for (i, j), c in sorted(self.pair_counts.items())]
        rows += [(f"obstacle v{i}-o{j}", c, c / n) for (i, j), c in sorted(self.obstacle_counts.items())]
        rows += [
            ("any_pair", self.pair_failures, self.pair_failures / n),
            ("any_obstacle", self.obstacle_failures, self.obstacle_failures / n),
            ("combined", self.failures, self.failures / n),
        ]
        return rows


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    # eigen-decomposition copes with singular (even zero) covariances
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def _check(plan: FleetPlan, scenario: Scenario) -> None:
    if sorted(plan.controls) != list(range(scenario.N)):
        raise PlanMismatch(f"plan covers vehicles {sorted(plan.controls)}, scenario has {scenario.N}")
    for v in scenario.vehicles:
        u = plan.controls[v.id]
        if u.ndim != 2 or u.shape[1] != v.m or u.shape[0] < 1:
            raise PlanMismatch(f"vehicle {v.id}: controls of shape {u.shape}")
        if plan.means[v.id].shape[1] != v.n:
            raise PlanMismatch(f"vehicle {v.id}: state dimension differs from the scenario")


def _sample_positions(plan: FleetPlan, scenario: Scenario, rng: np.random.Generator, n: int, per_state: bool):
    """Position samples per vehicle, shape ``(n, steps + 1, 2)``."""
    out = {}
    for v in scenario.vehicles:
        u = plan.controls[v.id]
        steps = u.shape[0]
        pos = np.empty((n, steps + 1, 2))
        if per_state:
            for k in range(steps + 1):
                L = _sqrt_psd(plan.covs[v.id][k])
                x = plan.means[v.id][k] + rng.standard_normal((n, v.n)) @ L.T
                pos[:, k] = x[:, :2]
        else:
            L0, Lw = _sqrt_psd(v.x0_cov), _sqrt_psd(v.w_cov)
            x = v.x0_mean + rng.standard_normal((n, v.n)) @ L0.T
            pos[:, 0] = x[:, :2]
            for k in range(steps):
                w = rng.standard_normal((n, v.n)) @ Lw.T
                x = x @ v.A.T + u[k] @ v.B.T + w
                pos[:, k + 1] = x[:, :2]
        out[v.id] = pos
    return out


def _inside(pos: np.ndarray, H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Strict interior test for KEEP_OUT regions stored as ``h . x > g`` on every edge."""
    return np.all(pos @ H.T > g, axis=-1)


def _shard_counts(plan, scenario, seed, shard, n, per_state, radius_scale):
    rng = np.random.default_rng(np.random.SeedSequence([seed, shard]))
    pos = _sample_positions(plan, scenario, rng, n, per_state)
    ids = sorted(pos)
    steps = min(p.shape[1] for p in pos.values())
    failed = np.zeros(n, dtype=bool)
    pair_any = np.zeros(n, dtype=bool)
    obs_any = np.zeros(n, dtype=bool)
    pair_counts: dict[tuple[int, int], int] = {}
    obstacle_counts: dict[tuple[int, int], int] = {}
    pair_step = np.zeros(steps, dtype=np.int64)
    obs_step = np.zeros(steps, dtype=np.int64)
    pair_step_hit = np.zeros((n, steps), dtype=bool)
    obs_step_hit = np.zeros((n, steps), dtype=bool)

    for i, j in itertools.combinations(ids, 2):
        r = radius_scale * (scenario.vehicles[i].radius + scenario.vehicles[j].radius)
        d = np.linalg.norm(pos[i][:, :steps] - pos[j][:, :steps], axis=-1)
        hit = d < r
        pair_step_hit |= hit
        ever = hit.any(axis=1)
        pair_counts[(i, j)] = int(ever.sum())
        pair_any |= ever
    for o_idx, ob in enumerate(scenario.obstacles):
        H = np.array([e.h for e in ob.edges])
        g = np.array([e.g for e in ob.edges])
        for i in ids:
            hit = _inside(pos[i][:, :steps], H, g)
            obs_step_hit |= hit
            ever = hit.any(axis=1)
            obstacle_counts[(i, o_idx)] = int(ever.sum())
            obs_any |= ever
    failed = pair_any | obs_any
    pair_step += pair_step_hit.sum(axis=0)
    obs_step += obs_step_hit.sum(axis=0)
    return {
        "failures": int(failed.sum()),
        "pair_failures": int(pair_any.sum()),
        "obstacle_failures": int(obs_any.sum()),
        "pair_counts": pair_counts,
        "obstacle_counts": obstacle_counts,
        "pair_step": pair_step,
        "obs_step": obs_step,
    }


def monte_carlo_verify(
    plan: FleetPlan,
    scenario: Scenario,
    n_rollouts: int = 100_000,
    seed: int = 0,
    *,
    shard_size: int = DEFAULT_SHARD,
    per_state: bool = False,
    workers: int = 1,
    radius_scale: float = 1.0,
) -> VerifyReport:
    """Sample ``n_rollouts`` full trajectories of the plan and count failures.

    ``per_state=True`` instead draws every state independently from its
    planned marginal, ignoring correlation across steps.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    _check(plan, scenario)
    sizes = [min(shard_size, n_rollouts - s) for s in range(0, n_rollouts, shard_size)]
    args = [(plan, scenario, seed, s, n, per_state, radius_scale) for s, n in enumerate(sizes)]
    if workers > 1 and len(args) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _shard_counts(*a), args))
    else:
        parts = [_shard_counts(*a) for a in args]

    report = VerifyReport(n_rollouts, 0, 0, 0, per_state=per_state)
    pair_step = obs_step = None
    for part in parts:
        report.failures += part["failures"]
        report.pair_failures += part["pair_failures"]
        report.obstacle_failures += part["obstacle_failures"]
        for key, c in part["pair_counts"].items():
            report.pair_counts[key] = report.pair_counts.get(key, 0) + c
        for key, c in part["obstacle_counts"].items():
            report.obstacle_counts[key] = report.obstacle_counts.get(key, 0) + c
        pair_step = part["pair_step"] if pair_step is None else pair_step + part["pair_step"]
        obs_step = part["obs_step"] if obs_step is None else obs_step + part["obs_step"]
    report.pair_step_counts = [int(c) for c in pair_step]
    report.obstacle_step_counts = [int(c) for c in obs_step]
    return report


def estimate_pair_probability(
    plan: FleetPlan,
    scenario: Scenario,
    pair: tuple[int, int],
    n_rollouts: int = 100_000,
    seed: int = 0,
    *,
    shard_size: int = DEFAULT_SHARD,
) -> float:
    """Fraction of rollouts in which the two vehicles ever come within collision distance."""
    i, j = sorted(pair)
    if i == j:
        raise ValueError("pair needs two distinct vehicles")
    report = monte_carlo_verify(plan, scenario, n_rollouts, seed, shard_size=shard_size)
    return report.pair_counts[(i, j)] / n_rollouts

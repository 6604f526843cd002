"""Coupling graph, group decomposition and the end-to-end fleet planner.

The decentralized approximation logs pairwise collision probabilities.  Pairs
whose worst logged probability exceeds ``psi`` are coupled; the connected
components of that graph are planned jointly with IRA, each under a share of
the joint risk budget proportional to its size.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import TrajectorySolution
from .constraints import temporal_obstacle
from .dynamics import GaussianState, rollout
from .ira import InfeasibleProblem, IraConfig, ira
from .radmpc import ApproxResult, InteractionLog, RadmpcConfig, radmpc
from .scenario import Scenario

logger = logging.getLogger(__name__)

CENTRALIZED = "CENTRALIZED"
PIPELINE = "PIPELINE"


@dataclass
class CouplingGraph:
    n: int
    edges: dict[tuple[int, int], float] = field(default_factory=dict)  # (i < j) -> max probability

    def __post_init__(self):
        for (i, j), p in self.edges.items():
            if i >= j:
                raise ValueError(f"edge ({i}, {j}) must be stored with i < j")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"edge weight outside [0, 1]: {p}")

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def weight(self, i: int, j: int) -> float:
        return self.edges.get((min(i, j), max(i, j)), 0.0)

    def neighbours(self, i: int) -> list[int]:
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))


def pair_maxima(log: InteractionLog) -> dict[tuple[int, int], float]:
    """Largest logged probability per unordered pair, over both directions."""
    out: dict[tuple[int, int], float] = {}
    for rec in log:
        key = (min(rec.vehicle, rec.owner), max(rec.vehicle, rec.owner))
        out[key] = max(out.get(key, 0.0), rec.p)
    return out


def find_couplings(log: InteractionLog, psi: float, n: int) -> CouplingGraph:
    """Couple every pair whose logged probability exceeds ``psi`` in either direction."""
    return CouplingGraph(n, {key: p for key, p in sorted(pair_maxima(log).items()) if p > psi})


def connected_components(graph: CouplingGraph) -> list[list[int]]:
    parent = list(range(graph.n))

    def root(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in graph.edges:
        ri, rj = root(i), root(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(graph.n):
        groups.setdefault(root(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def group_budget(delta_total: float, group_size: int, n_total: int) -> float:
    if not 1 <= group_size <= n_total:
        raise ValueError("group size must lie in [1, n_total]")
    return delta_total * group_size / n_total


def split_budget(delta_total: float, sizes: list[int], n_total: int) -> list[float]:
    """Per-group budgets that sum (with exact summation) to ``delta_total``.

    Each share is ``delta * size / n``; the rounding residue is absorbed by
    the last and smallest shares so the fleet never gets more or less than
    the joint budget.
    """
    if sum(sizes) != n_total:
        raise ValueError("group sizes must partition the fleet")
    budgets = [group_budget(delta_total, s, n_total) for s in sizes]
    budgets[-1] = delta_total - math.fsum(budgets[:-1])
    # nudge the smallest share: it has the finest spacing, so the exact sum
    # can always be steered onto delta_total
    small = min(range(len(budgets)), key=lambda g: budgets[g])
    for _ in range(64):
        resid = math.fsum(budgets) - delta_total
        if resid == 0.0:
            break
        budgets[small] = float(np.nextafter(budgets[small], -math.inf if resid > 0 else math.inf))
    return budgets


@dataclass
class FleetPlan:
    """Complete-horizon plans for every vehicle plus how they were obtained."""

    means: dict[int, np.ndarray]  # (T+1, n)
    covs: dict[int, np.ndarray]  # (T+1, n, n)
    controls: dict[int, np.ndarray]  # (T, m)
    groups: list[list[int]]
    group_objectives: list[float]
    group_status: list[str]
    group_budgets: list[float]
    group_risk: list[float]  # allocated risk actually used by each group
    provenance: str
    seed: int = 0
    couplings: dict[tuple[int, int], float] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return math.fsum(self.group_objectives)

    @property
    def vehicle_ids(self) -> list[int]:
        return sorted(self.means)

    @property
    def horizon(self) -> int:
        return next(iter(self.controls.values())).shape[0]

    @property
    def feasible(self) -> bool:
        return all(s == "optimal" for s in self.group_status)

    def group_of(self, vehicle: int) -> int:
        for g, members in enumerate(self.groups):
            if vehicle in members:
                return g
        raise KeyError(vehicle)

    def to_dict(self, *, timings: bool = True) -> dict:
        doc = {
            "provenance": self.provenance,
            "seed": self.seed,
            "objective": self.objective,
            "groups": [list(g) for g in self.groups],
            "group_objectives": list(self.group_objectives),
            "group_status": list(self.group_status),
            "group_budgets": list(self.group_budgets),
            "group_risk": list(self.group_risk),
            "couplings": [[i, j, p] for (i, j), p in sorted(self.couplings.items())],
            "vehicles": {
                str(i): {
                    "means": self.means[i].tolist(),
                    "covs": self.covs[i].tolist(),
                    "controls": self.controls[i].tolist(),
                }
                for i in self.vehicle_ids
            },
        }
        if timings:
            doc["timings"] = dict(self.timings)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> FleetPlan:
        veh = doc["vehicles"]
        ids = sorted(int(i) for i in veh)
        return cls(
            means={i: np.asarray(veh[str(i)]["means"], dtype=float) for i in ids},
            covs={i: np.asarray(veh[str(i)]["covs"], dtype=float) for i in ids},
            controls={i: np.asarray(veh[str(i)]["controls"], dtype=float) for i in ids},
            groups=[list(map(int, g)) for g in doc["groups"]],
            group_objectives=[float(x) for x in doc["group_objectives"]],
            group_status=list(doc["group_status"]),
            group_budgets=[float(x) for x in doc["group_budgets"]],
            group_risk=[float(x) for x in doc["group_risk"]],
            provenance=doc["provenance"],
            seed=int(doc.get("seed", 0)),
            couplings={(int(i), int(j)): float(p) for i, j, p in doc.get("couplings", [])},
            timings={k: float(v) for k, v in doc.get("timings", {}).items()},
        )

    def save(self, path, *, timings: bool = True) -> None:
        text = json.dumps(self.to_dict(timings=timings), indent=1, sort_keys=True)
        Path(path).write_text(text + "\n")

    @classmethod
    def load(cls, path) -> FleetPlan:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FleetConfig:
    ira: IraConfig = field(default_factory=IraConfig)
    radmpc: RadmpcConfig | None = None  # defaults to RadmpcConfig(ira=ira, seed=seed)
    strict: bool = False  # second pass against the other groups' plans
    workers: int = 1


@dataclass
class _GroupResult:
    solution: TrajectorySolution | None
    status: str


def _solve_group(scenario: Scenario, members: list[int], budget: float, cfg: IraConfig, temporal=()) -> _GroupResult:
    try:
        sol = ira(
            scenario.subset(members),
            scenario.obstacle_regions(),
            list(temporal),
            scenario.T,
            budget,
            cfg,
            world=scenario.world_bounds,
            pairwise=len(members) > 1,
        )
        return _GroupResult(sol, "optimal")
    except InfeasibleProblem as exc:
        logger.warning("group %s infeasible: %s", members, exc)
        return _GroupResult(None, exc.status.name.lower())


def _fallback_controls(scenario: Scenario, vid: int, approx: ApproxResult | None) -> np.ndarray:
    """Controls for a vehicle whose group failed: the approximation's, else zero."""
    v = scenario.vehicles[vid]
    out = np.zeros((scenario.T, v.m))
    if approx is not None:
        u = np.asarray(approx.controls[vid], dtype=float).reshape(-1, v.m)[: scenario.T]
        out[: len(u)] = u
    return out


def _assemble(
    scenario: Scenario,
    groups: list[list[int]],
    budgets: list[float],
    results: list[_GroupResult],
    provenance: str,
    seed: int,
    approx: ApproxResult | None,
    couplings: dict,
) -> FleetPlan:
    means, covs, controls = {}, {}, {}
    objectives, status, risk = [], [], []
    for members, res in zip(groups, results):
        sol = res.solution
        if sol is not None:
            for i in members:
                means[i] = np.asarray(sol.means[i], dtype=float)
                covs[i] = np.asarray(sol.covs[i], dtype=float)
                controls[i] = np.asarray(sol.controls[i], dtype=float)
            objectives.append(float(sol.objective))
            risk.append(sol.allocation.total() if sol.allocation is not None else 0.0)
        else:
            for i in members:
                u = _fallback_controls(scenario, i, approx)
                states = rollout(scenario.vehicles[i], list(u))
                means[i] = np.array([s.mean for s in states])
                covs[i] = np.array([s.cov for s in states])
                controls[i] = u
            objectives.append(math.inf)
            risk.append(0.0)
        status.append(res.status)
    return FleetPlan(means, covs, controls, groups, objectives, status, budgets, risk, provenance, seed, couplings)


def _plan_temporal(plan_means, plan_covs, vid: int, radius: float):
    states = [GaussianState(m, c, k) for k, (m, c) in enumerate(zip(plan_means, plan_covs))]
    return temporal_obstacle(states, owner=vid, start_time=0, margin=2.0 * radius)


def plan_fleet(scenario: Scenario, config: FleetConfig | None = None, seed: int = 0) -> FleetPlan:
    """Approximate, decouple, then plan every coupled group with IRA from the original starts."""
    cfg = config or FleetConfig()
    rcfg = cfg.radmpc or RadmpcConfig(ira=cfg.ira, seed=seed)
    t0 = time.perf_counter()
    approx = radmpc(scenario, rcfg)
    t_radmpc = time.perf_counter() - t0

    graph = find_couplings(approx.log, scenario.psi, scenario.N)
    groups = connected_components(graph)
    budgets = split_budget(scenario.delta_total, [len(g) for g in groups], scenario.N)
    logger.info("coupling graph: %d edges, groups %s", len(graph.edges), groups)

    t1 = time.perf_counter()
    jobs = list(zip(groups, budgets))
    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda gb: _solve_group(scenario, gb[0], gb[1], cfg.ira), jobs))
    else:
        results = [_solve_group(scenario, g, b, cfg.ira) for g, b in jobs]

    if cfg.strict and len(groups) > 1:
        first = _assemble(scenario, groups, budgets, results, PIPELINE, seed, approx, graph.edges)
        strict_results = []
        for g, b in jobs:
            temporal = [
                _plan_temporal(first.means[j], first.covs[j], j, scenario.vehicles[j].radius)
                for j in range(scenario.N)
                if j not in g
            ]
            res = _solve_group(scenario, g, b, cfg.ira, temporal)
            strict_results.append(res if res.solution is not None else results[len(strict_results)])
        results = strict_results
    t_groups = time.perf_counter() - t1

    plan = _assemble(scenario, groups, budgets, results, PIPELINE, seed, approx, dict(graph.edges))
    plan.timings = {
        "t_radmpc": t_radmpc,
        "t_group_solve_total": t_groups,
        "t_total": time.perf_counter() - t0,
    }
    return plan


def plan_fleet_centralized(scenario: Scenario, config: FleetConfig | None = None, seed: int = 0) -> FleetPlan:
    """Single IRA problem over the whole fleet with every pairwise avoidance constraint."""
    cfg = config or FleetConfig()
    t0 = time.perf_counter()
    members = list(range(scenario.N))
    res = _solve_group(scenario, members, scenario.delta_total, cfg.ira)
    elapsed = time.perf_counter() - t0
    plan = _assemble(scenario, [members], [scenario.delta_total], [res], CENTRALIZED, seed, None, {})
    plan.timings = {"t_radmpc": 0.0, "t_group_solve_total": elapsed, "t_total": elapsed}
    return plan

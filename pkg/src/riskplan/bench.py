"""Benchmark harness: pipeline versus centralized IRA on random scenarios.

Every trial derives its scenario seed from ``(seed, N, trial)`` alone, so a
trial's record does not depend on which other trials run or in what order.
Outputs are comma-separated tables.  Wall-clock columns live in their own
files (``timing.csv``, ``timing_summary.csv``) so the remaining tables are
byte-for-byte reproducible for a fixed seed.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import FleetConfig, FleetPlan, plan_fleet, plan_fleet_centralized
from .scenario import random_scenario
from .verify import monte_carlo_verify

logger = logging.getLogger(__name__)

WORKERS_ENV = "RISKPLAN_WORKERS"

RESULT_COLUMNS = [
    "n_vehicles", "trial", "seed", "n_groups", "group_sizes", "pipeline_status",
    "objective_pipeline", "success_pipeline", "centralized_status", "objective_centralized",
    "success_centralized",
]
SUMMARY_COLUMNS = [
    "n_vehicles", "records", "split_records", "mean_success_pipeline", "mean_success_centralized",
    "mean_groups",
]
TIMING_COLUMNS = ["n_vehicles", "trial", "t_radmpc", "t_group_solve_total", "t_pipeline", "t_centralized", "speedup"]
TIMING_SUMMARY_COLUMNS = [
    "n_vehicles", "mean_t_pipeline", "median_t_pipeline", "mean_t_centralized", "median_t_centralized",
    "mean_speedup", "mean_speedup_split",
]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def trial_seed(seed: int, n_vehicles: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, n_vehicles, trial]).generate_state(1)[0])


@dataclass
class BenchRecord:
    n_vehicles: int
    trial: int
    seed: int
    t_pipeline: float
    success_pipeline: float | None
    group_sizes: list[int]
    objective_pipeline: float
    pipeline_status: str
    t_radmpc: float = 0.0
    t_group_solve_total: float = 0.0
    t_centralized: float | None = None
    success_centralized: float | None = None
    objective_centralized: float | None = None
    centralized_status: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    @property
    def speedup(self) -> float | None:
        if self.t_centralized is None or self.t_pipeline <= 0:
            return None
        return self.t_centralized / self.t_pipeline

    def histogram(self) -> str:
        """Group-size histogram as ``size:count`` pairs, e.g. ``1:3;2:1``."""
        counts: dict[int, int] = {}
        for s in self.group_sizes:
            counts[s] = counts.get(s, 0) + 1
        return ";".join(f"{s}:{c}" for s, c in sorted(counts.items()))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(round(x, 12))
    return str(x)


def _status(plan: FleetPlan) -> str:
    return "optimal" if plan.feasible else "+".join(sorted(set(plan.group_status) - {"optimal"}))


def run_trial(
    n_vehicles: int,
    trial: int,
    seed: int,
    *,
    max_centralized_n: int = 5,
    samples: int = 10_000,
    n_obstacles: int = 3,
    delta: float | None = None,
    psi: float | None = None,
    config: FleetConfig | None = None,
    centralized_only_if_split: bool = False,
) -> BenchRecord:
    """Plan one random instance with the pipeline (and centralized IRA if small enough)."""
    s = trial_seed(seed, n_vehicles, trial)
    kwargs = {}
    if delta is not None:
        kwargs["delta"] = delta
    if psi is not None:
        kwargs["psi"] = psi
    scenario = random_scenario(n_vehicles, n_obstacles, seed=s, **kwargs)
    cfg = config or FleetConfig()

    plan = plan_fleet(scenario, cfg, seed=s)
    rec = BenchRecord(
        n_vehicles=n_vehicles,
        trial=trial,
        seed=s,
        t_pipeline=plan.timings["t_total"],
        success_pipeline=None,
        group_sizes=[len(g) for g in plan.groups],
        objective_pipeline=plan.objective,
        pipeline_status=_status(plan),
        t_radmpc=plan.timings["t_radmpc"],
        t_group_solve_total=plan.timings["t_group_solve_total"],
    )
    if samples > 0:
        rec.success_pipeline = monte_carlo_verify(plan, scenario, samples, seed=s).success_rate

    run_central = n_vehicles <= max_centralized_n and not (centralized_only_if_split and rec.n_groups < 2)
    if run_central:
        central = plan_fleet_centralized(scenario, cfg, seed=s)
        rec.t_centralized = central.timings["t_total"]
        rec.objective_centralized = central.objective
        rec.centralized_status = _status(central)
        if samples > 0:
            rec.success_centralized = monte_carlo_verify(central, scenario, samples, seed=s).success_rate
    return rec


def _run_trial_args(args) -> BenchRecord | None:
    n, trial, seed, kwargs = args
    try:
        return run_trial(n, trial, seed, **kwargs)
    except Exception:  # a failed trial is logged and skipped
        logger.exception("trial N=%d #%d failed", n, trial)
        return None


def run_bench(
    n_values,
    trials: int,
    seed: int = 0,
    *,
    workers: int = 1,
    **kwargs,
) -> list[BenchRecord]:
    """All trials in ``(N, trial)`` order; failed trials are dropped."""
    jobs = [(n, t, seed, kwargs) for n in n_values for t in range(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_trial_args, jobs))
    else:
        results = [_run_trial_args(j) for j in jobs]
    return [r for r in results if r is not None]


def _mean(xs) -> float | None:
    xs = [x for x in xs if x is not None]
    return math.fsum(xs) / len(xs) if xs else None


def _median(xs) -> float | None:
    xs = [x for x in xs if x is not None]
    return statistics.median(xs) if xs else None


def summarize(records: list[BenchRecord]) -> list[dict]:
    rows = []
    for n in sorted({r.n_vehicles for r in records}):
        rs = [r for r in records if r.n_vehicles == n]
        rows.append(
            {
                "n_vehicles": n,
                "records": len(rs),
                "split_records": sum(r.n_groups >= 2 for r in rs),
                "mean_success_pipeline": _mean(r.success_pipeline for r in rs),
                "mean_success_centralized": _mean(r.success_centralized for r in rs),
                "mean_groups": _mean(float(r.n_groups) for r in rs),
            }
        )
    return rows


def summarize_timing(records: list[BenchRecord]) -> list[dict]:
    rows = []
    for n in sorted({r.n_vehicles for r in records}):
        rs = [r for r in records if r.n_vehicles == n]
        rows.append(
            {
                "n_vehicles": n,
                "mean_t_pipeline": _mean(r.t_pipeline for r in rs),
                "median_t_pipeline": _median(r.t_pipeline for r in rs),
                "mean_t_centralized": _mean(r.t_centralized for r in rs),
                "median_t_centralized": _median(r.t_centralized for r in rs),
                "mean_speedup": _mean(r.speedup for r in rs),
                "mean_speedup_split": _mean(r.speedup for r in rs if r.n_groups >= 2),
            }
        )
    return rows


def _write(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_tables(records: list[BenchRecord], outdir) -> dict[str, Path]:
    """Write the four bench tables into ``outdir``; returns their paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    results = [
        {
            "n_vehicles": r.n_vehicles,
            "trial": r.trial,
            "seed": r.seed,
            "n_groups": r.n_groups,
            "group_sizes": r.histogram(),
            "pipeline_status": r.pipeline_status,
            "objective_pipeline": r.objective_pipeline,
            "success_pipeline": r.success_pipeline,
            "centralized_status": r.centralized_status,
            "objective_centralized": r.objective_centralized,
            "success_centralized": r.success_centralized,
        }
        for r in records
    ]
    timing = [
        {
            "n_vehicles": r.n_vehicles,
            "trial": r.trial,
            "t_radmpc": r.t_radmpc,
            "t_group_solve_total": r.t_group_solve_total,
            "t_pipeline": r.t_pipeline,
            "t_centralized": r.t_centralized,
            "speedup": r.speedup,
        }
        for r in records
    ]
    paths = {
        "results": out / "results.csv",
        "summary": out / "summary.csv",
        "timing": out / "timing.csv",
        "timing_summary": out / "timing_summary.csv",
    }
    _write(paths["results"], RESULT_COLUMNS, results)
    _write(paths["summary"], SUMMARY_COLUMNS, summarize(records))
    _write(paths["timing"], TIMING_COLUMNS, timing)
    _write(paths["timing_summary"], TIMING_SUMMARY_COLUMNS, summarize_timing(records))
    return paths

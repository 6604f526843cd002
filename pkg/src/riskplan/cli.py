"""Command-line interface: ``plan``, ``verify``, ``bench`` and ``trace``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible plan,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .bench import default_workers, run_bench, write_tables
from .constraints import sigma_radius
from .coupling import FleetConfig, FleetPlan, plan_fleet, plan_fleet_centralized
from .radmpc import RadmpcConfig, radmpc
from .scenario import ScenarioError, load_scenario
from .verify import PlanMismatch, monte_carlo_verify

logger = logging.getLogger("riskplan")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3
TRACE_COLUMNS = ["k", "vehicle", "x", "y", "radius3sigma", "group"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _n_range(text: str) -> list[int]:
    """``"2-5"`` or ``"2,3,4"`` to a list of fleet sizes."""
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskplan", description="Risk-bounded multi-vehicle trajectory planning.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--output", required=True)
        sp.add_argument("--psi", type=float, default=None, help="override the coupling threshold")
        sp.add_argument("--delta", type=float, default=None, help="override the joint risk bound")
        sp.add_argument("--workers", type=int, default=default_workers())

    sp = sub.add_parser("plan", help="plan a scenario")
    common(sp)
    sp.add_argument("--mode", choices=["pipeline", "centralized", "radmpc-only"], default="pipeline")
    sp.add_argument("--strict", action="store_true", help="second pass against other groups' plans")

    sp = sub.add_parser("verify", help="Monte Carlo check of a plan")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", default=None, help="optional JSON report")
    sp.add_argument("--per-state", action="store_true", help="sample each state from its marginal")
    sp.add_argument("--workers", type=int, default=default_workers())

    sp = sub.add_parser("bench", help="pipeline versus centralized benchmark")
    common(sp, scenario=False)
    sp.add_argument("--n-range", type=_n_range, default=[2, 3, 4, 5])
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--max-centralized-n", type=int, default=5)
    sp.add_argument("--obstacles", type=int, default=3)

    sp = sub.add_parser("trace", help="per-step plot data for a plan")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--output", required=True)
    return p


def _load_scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "delta", None) is not None:
        sc.delta_total = args.delta
    if getattr(args, "psi", None) is not None:
        sc.psi = args.psi
    return sc


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def timing_path(output) -> Path:
    out = Path(output)
    return out.with_name(out.stem + ".timing.json")


def cmd_plan(args) -> int:
    sc = _load_scenario(args)
    cfg = FleetConfig(strict=args.strict, workers=args.workers)
    if args.mode == "radmpc-only":
        res = radmpc(sc, RadmpcConfig(ira=cfg.ira, seed=args.seed))
        _write_json(args.output, res.to_dict())
        _write_json(timing_path(args.output), {"t_radmpc": res.wall_time, "t_total": res.wall_time})
        if not res.converged:
            print("radmpc: not every vehicle reached its goal", file=sys.stderr)
            return EXIT_INFEASIBLE
        return EXIT_OK
    if args.mode == "centralized":
        plan = plan_fleet_centralized(sc, cfg, seed=args.seed)
    else:
        plan = plan_fleet(sc, cfg, seed=args.seed)
    plan.save(args.output, timings=False)
    _write_json(timing_path(args.output), plan.timings)
    print(json.dumps({"objective": plan.objective, "groups": plan.groups, **plan.timings}))
    if not plan.feasible:
        for members, status in zip(plan.groups, plan.group_status):
            if status != "optimal":
                print(f"group {members}: {status}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = _load_scenario(args)
    plan = FleetPlan.load(args.plan)
    report = monte_carlo_verify(plan, sc, args.samples, args.seed, per_state=args.per_state, workers=args.workers)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["category", "count", "rate"])
    for row in report.table():
        w.writerow([row[0], row[1], repr(row[2])])
    ok = report.passes(sc.delta_total)
    print(
        f"success_rate={report.success_rate:.6f} std_error={report.std_error:.6f} "
        f"delta={sc.delta_total} {'PASS' if ok else 'FAIL'}"
    )
    if args.output:
        _write_json(args.output, report.to_dict())
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    records = run_bench(
        args.n_range,
        args.trials,
        args.seed,
        workers=args.workers,
        max_centralized_n=args.max_centralized_n,
        samples=args.samples,
        n_obstacles=args.obstacles,
        delta=args.delta,
        psi=args.psi,
    )
    paths = write_tables(records, args.output)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def trace_rows(plan: FleetPlan) -> list[list]:
    rows = []
    for i in plan.vehicle_ids:
        group = plan.group_of(i)
        for k, (mean, cov) in enumerate(zip(plan.means[i], plan.covs[i])):
            rows.append([k, i, float(mean[0]), float(mean[1]), sigma_radius(cov), group])
    return rows


def cmd_trace(args) -> int:
    plan = FleetPlan.load(args.plan)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace_rows(plan):
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4]), row[5]])
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "verify": cmd_verify, "bench": cmd_bench, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, PlanMismatch, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"riskplan {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

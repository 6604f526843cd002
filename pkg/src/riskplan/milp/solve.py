"""Mixed-integer solvers over :class:`MilpModel`.

Two routes are provided:

* ``backend="highs"`` hands the model to HiGHS through ``scipy.optimize.milp``.
* ``backend="bnb"`` is a deterministic depth-first branch-and-bound over LP
  relaxations (most-fractional binary first, ties by lowest index, best-bound
  pruning).  Its LP engine is HiGHS (``lp="highs"``) or the in-house dense
  simplex (``lp="simplex"``).

:func:`brute_force_milp` enumerates every binary assignment and solves each
LP with the in-house simplex; it is the independent test oracle.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .model import MilpModel, MilpSolution, Sense, Status
from .simplex import LpResult, solve_lp

logger = logging.getLogger(__name__)

INT_TOL = 1e-6
FEAS_TOL = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "highs"  # highs | bnb
    lp: str = "highs"  # LP engine for bnb: highs | simplex
    node_limit: int = 200_000
    time_limit: float | None = None
    abs_gap: float = 1e-7
    rel_gap: float = 1e-7
    polish: bool = True
    presolve: bool = True
    # HiGHS integrality tolerance; with M = 1e5 a binary off by eps relaxes a row by eps * M
    int_tol: float = 1e-9


class _LpEngine:
    """LP relaxation solver with per-call variable bounds."""

    def __init__(self, model: MilpModel, engine: str):
        self.engine = engine
        self.c = model.objective()
        self.A_ub, self.b_ub, self.A_eq, self.b_eq = model.split()
        if engine == "simplex":
            self.A_ub = self.A_ub.toarray()
            self.A_eq = self.A_eq.toarray()
        elif engine != "highs":
            raise ValueError(f"unknown LP engine {engine!r}")

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> LpResult:
        if self.engine == "simplex":
            return solve_lp(self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq, lb, ub)
        return _linprog(self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq, lb, ub)


def _linprog(c, A_ub, b_ub, A_eq, b_eq, lb, ub) -> LpResult:
    res = optimize.linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=np.column_stack([lb, ub]),
        method="highs",
    )
    if res.status == 0:
        return LpResult(Status.OPTIMAL, res.x, float(res.fun), int(res.nit))
    if res.status == 2:
        return LpResult(Status.INFEASIBLE)
    if res.status == 3:
        return LpResult(Status.UNBOUNDED)
    return LpResult(Status.ITER_LIMIT)


def _polish(model: MilpModel, x: np.ndarray) -> np.ndarray | None:
    """Snap binaries and re-solve the continuous part so rows hold exactly."""
    b = model.binaries
    if b.size == 0:
        return x
    lb, ub = model.bounds()
    lb[b] = ub[b] = np.round(x[b])
    A_ub, b_ub, A_eq, b_eq = model.split()
    res = _linprog(model.objective(), A_ub, b_ub, A_eq, b_eq, lb, ub)
    if res.status is Status.OPTIMAL:
        return res.x
    return None


def _finish(model: MilpModel, x: np.ndarray, status: Status, nodes: int, polish: bool) -> MilpSolution:
    if polish:
        px = _polish(model, x)
        if px is not None:
            x = px
        else:
            logger.warning("polish LP failed; keeping the raw solver point")
    b = model.binaries
    x = np.array(x, dtype=float)
    if b.size:
        x[b] = np.round(x[b])
    return MilpSolution(status, model.value(x), x, nodes)


def _solve_highs(model: MilpModel, cfg: SolverConfig) -> MilpSolution:
    A = model.matrix()
    lo = np.array([-np.inf if r.sense is Sense.LE else r.rhs for r in model.rows])
    hi = np.array([r.rhs for r in model.rows])
    lb, ub = model.bounds()
    options = {
        "mip_rel_gap": cfg.rel_gap,
        "mip_abs_gap": cfg.abs_gap,
        "node_limit": cfg.node_limit,
        "presolve": cfg.presolve,
        "mip_feasibility_tolerance": cfg.int_tol,
    }
    if cfg.time_limit is not None:
        options["time_limit"] = cfg.time_limit
    constraints = [optimize.LinearConstraint(A, lo, hi)] if model.n_rows else None
    with warnings.catch_warnings():
        # options scipy does not know are passed through to HiGHS verbatim
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.milp(
            model.objective(),
            integrality=np.asarray(model.is_binary, dtype=int),
            bounds=optimize.Bounds(lb, ub),
            constraints=constraints,
            options=options,
        )
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        return _finish(model, res.x, Status.OPTIMAL, nodes, cfg.polish)
    if res.status == 1:
        if res.x is not None:
            return _finish(model, res.x, Status.ITER_LIMIT, nodes, cfg.polish)
        return MilpSolution(Status.ITER_LIMIT, nodes=nodes)
    if res.status == 2:
        return MilpSolution(Status.INFEASIBLE, nodes=nodes)
    if res.status == 3:
        return MilpSolution(Status.UNBOUNDED, nodes=nodes)
    raise RuntimeError(f"HiGHS failed: {res.message}")


def _solve_bnb(model: MilpModel, cfg: SolverConfig) -> MilpSolution:
    lp = _LpEngine(model, cfg.lp)
    lb0, ub0 = model.bounds()
    bins = model.binaries
    best_x: np.ndarray | None = None
    best_obj = math.inf
    nodes = 0
    stack = [(lb0, ub0)]
    while stack:
        if nodes >= cfg.node_limit:
            status = Status.ITER_LIMIT
            if best_x is None:
                return MilpSolution(status, nodes=nodes)
            return _finish(model, best_x, status, nodes, cfg.polish)
        lb, ub = stack.pop()
        nodes += 1
        res = lp.solve(lb, ub)
        if res.status is Status.UNBOUNDED and nodes == 1:
            return MilpSolution(Status.UNBOUNDED, nodes=nodes)
        if res.status is not Status.OPTIMAL:
            continue
        if res.objective >= best_obj - cfg.abs_gap:
            continue
        x = res.x
        if bins.size == 0:
            best_x, best_obj = x, res.objective
            break
        frac = np.abs(x[bins] - np.round(x[bins]))
        if frac.max() <= INT_TOL:
            best_x, best_obj = x, res.objective
            continue
        # most fractional binary; argmin returns the lowest index on ties
        dist = np.abs(x[bins] - 0.5)
        j = int(bins[int(np.argmin(dist))])
        up = x[j] >= 0.5
        down_lb, down_ub = lb.copy(), ub.copy()
        down_ub[j] = 0.0
        up_lb, up_ub = lb.copy(), ub.copy()
        up_lb[j] = 1.0
        # push the rounding-direction child last so it is explored first
        if up:
            stack.append((down_lb, down_ub))
            stack.append((up_lb, up_ub))
        else:
            stack.append((up_lb, up_ub))
            stack.append((down_lb, down_ub))
    if best_x is None:
        return MilpSolution(Status.INFEASIBLE, nodes=nodes)
    return _finish(model, best_x, Status.OPTIMAL, nodes, cfg.polish)


def solve_milp(model: MilpModel, config: SolverConfig | None = None) -> MilpSolution:
    cfg = config or SolverConfig()
    if cfg.backend == "highs":
        return _solve_highs(model, cfg)
    if cfg.backend == "bnb":
        return _solve_bnb(model, cfg)
    raise ValueError(f"unknown backend {cfg.backend!r}")


def brute_force_milp(model: MilpModel, max_binaries: int = 24) -> MilpSolution:
    """Enumerate all binary assignments; each LP is solved by the dense simplex."""
    bins = model.binaries
    if bins.size > max_binaries:
        raise ValueError(f"{bins.size} binaries exceed the enumeration limit {max_binaries}")
    cont = np.flatnonzero(~np.asarray(model.is_binary, dtype=bool))
    A_ub, b_ub, A_eq, b_eq = model.split()
    A_ub, A_eq = A_ub.toarray(), A_eq.toarray()
    c = model.objective()
    lb, ub = model.bounds()
    best = MilpSolution(Status.INFEASIBLE, nodes=0)
    for count, assign in enumerate(itertools.product((0.0, 1.0), repeat=bins.size), start=1):
        v = np.asarray(assign)
        res = solve_lp(
            c[cont],
            A_ub[:, cont],
            b_ub - A_ub[:, bins] @ v,
            A_eq[:, cont],
            b_eq - A_eq[:, bins] @ v,
            lb[cont],
            ub[cont],
        )
        if res.status is Status.UNBOUNDED:
            return MilpSolution(Status.UNBOUNDED, nodes=count)
        if res.status is not Status.OPTIMAL:
            continue
        obj = res.objective + float(c[bins] @ v)
        if obj < best.objective - 1e-12:
            x = np.zeros(model.n_vars)
            x[cont] = res.x
            x[bins] = v
            best = MilpSolution(Status.OPTIMAL, obj, x)
        best.nodes = count
    best.nodes = 2 ** bins.size
    return best


def lp_relaxation(model: MilpModel, engine: str = "highs") -> LpResult:
    lb, ub = model.bounds()
    return _LpEngine(model, engine).solve(lb, ub)

"""Risk allocations and trajectory solutions shared by the planners."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, NamedTuple

import numpy as np

if TYPE_CHECKING:
    from .milp.model import Status

logger = logging.getLogger(__name__)

MAX_DELTA = 0.5
BUDGET_TOL = 1e-12


class ConstraintKey(NamedTuple):
    """One disjunctive chance constraint: ``vehicle`` avoids ``obj`` at step ``k``.

    ``obj`` is ``"obs<j>"`` for static obstacle ``j`` and ``"veh<j>"`` for
    vehicle ``j`` (a pairwise square in joint problems, a temporal obstacle
    in single-vehicle subproblems).  ``k`` counts steps from the plan start.
    """

    vehicle: int
    obj: str
    k: int


@dataclass
class RiskAllocation:
    deltas: dict[ConstraintKey, float]
    budget: float

    def __post_init__(self):
        for key, d in self.deltas.items():
            if not 0.0 < d <= MAX_DELTA:
                raise ValueError(f"risk bound for {key} outside (0, 0.5]: {d}")
        if self.total() > self.budget + BUDGET_TOL:
            raise ValueError(f"allocation {self.total()} exceeds budget {self.budget}")

    def __getitem__(self, key: ConstraintKey) -> float:
        return self.deltas[key]

    def __contains__(self, key) -> bool:
        return key in self.deltas

    def __len__(self) -> int:
        return len(self.deltas)

    def keys(self):
        return self.deltas.keys()

    def total(self) -> float:
        return math.fsum(self.deltas.values())

    def at_step(self, k: int) -> list[float]:
        return [d for key, d in self.deltas.items() if key.k == k]


def uniform_allocation(structure: Iterable[ConstraintKey], budget: float) -> RiskAllocation:
    """Split ``budget`` evenly over ``structure`` (each share capped at 0.5)."""
    keys = list(dict.fromkeys(structure))
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not keys:
        raise ValueError("empty constraint structure")
    share = budget / len(keys)
    if share > MAX_DELTA:
        logger.warning("uniform share %.4g exceeds 0.5; clamping and leaving risk unallocated", share)
        share = MAX_DELTA
    alloc = RiskAllocation({k: share for k in keys}, budget)
    # float division can leave the sum a hair above the budget
    while alloc.total() > budget:
        share = np.nextafter(share, 0.0)
        alloc = RiskAllocation({k: share for k in keys}, budget)
    return alloc


class EdgeStat(NamedTuple):
    g: float  # untightened offset
    value: float  # h . nominal position(s)
    var: float  # projected variance h' cov h
    enabled: bool  # binary == 0


@dataclass
class TrajectorySolution:
    """Nominal plan for a set of vehicles plus the risk bookkeeping behind it."""

    status: Status
    vehicle_ids: list[int]
    means: dict[int, np.ndarray]  # (H+1, n)
    covs: dict[int, np.ndarray]  # (H+1, n, n)
    controls: dict[int, np.ndarray]  # (H, m)
    binaries: dict[ConstraintKey, np.ndarray]
    edges: dict[ConstraintKey, list[EdgeStat]]
    allocation: RiskAllocation | None
    objective: float
    effort: float
    start_time: int = 0
    soft_goal: bool = False
    trace: list[dict] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return next(iter(self.controls.values())).shape[0] if self.controls else 0

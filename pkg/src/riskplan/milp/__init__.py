"""MILP modelling, solvers and the deterministic-equivalent lower stage."""
from .lower_stage import (
    BIG_M,
    AllocationGap,
    LowerStage,
    build_lower_stage,
    constraint_structure,
    extract_solution,
)
from .model import MilpModel, MilpSolution, Sense, Status, VarTag
from .simplex import LpResult, solve_lp
from .solve import SolverConfig, brute_force_milp, lp_relaxation, solve_milp

__all__ = [
    "BIG_M",
    "AllocationGap",
    "LowerStage",
    "LpResult",
    "MilpModel",
    "MilpSolution",
    "Sense",
    "SolverConfig",
    "Status",
    "VarTag",
    "brute_force_milp",
    "build_lower_stage",
    "constraint_structure",
    "extract_solution",
    "lp_relaxation",
    "solve_lp",
    "solve_milp",
]

"""Sparse mixed-integer linear model container."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy import sparse


class Sense(enum.Enum):
    LE = "<="
    EQ = "="


class Status(enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    ITER_LIMIT = "ITER_LIMIT"
    UNBOUNDED = "UNBOUNDED"


@dataclass(frozen=True)
class VarTag:
    vehicle: int = -1
    step: int = -1
    role: str = "aux"  # state / control / abs / binary / slack / aux
    index: int = 0
    key: Any = None


@dataclass
class Row:
    idx: np.ndarray
    coef: np.ndarray
    sense: Sense
    rhs: float
    tag: str = ""


@dataclass
class MilpModel:
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    obj: list[float] = field(default_factory=list)
    is_binary: list[bool] = field(default_factory=list)
    tags: list[VarTag] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.is_binary)

    @property
    def n_binaries(self) -> int:
        return int(sum(self.is_binary))

    def add_var(
        self,
        lb: float = -math.inf,
        ub: float = math.inf,
        obj: float = 0.0,
        *,
        binary: bool = False,
        tag: VarTag | None = None,
    ) -> int:
        if binary:
            lb, ub = 0.0, 1.0
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.is_binary.append(binary)
        self.tags.append(tag or VarTag())
        return len(self.lb) - 1

    def add_vars(self, count: int, lb=-math.inf, ub=math.inf, **kw) -> list[int]:
        return [self.add_var(lb, ub, **kw) for _ in range(count)]

    def add_row(self, terms, sense: Sense | str, rhs: float, tag: str = "") -> int:
        """Add ``sum(coef * x[idx]) (<=|=) rhs``; ``terms`` is a mapping or (idx, coef) pairs."""
        if isinstance(terms, dict):
            items = list(terms.items())
        else:
            items = list(terms)
        acc: dict[int, float] = {}
        for j, a in items:
            j = int(j)
            if not 0 <= j < self.n_vars:
                raise IndexError(f"row references undeclared variable {j}")
            acc[j] = acc.get(j, 0.0) + float(a)
        idx = np.fromiter(acc.keys(), dtype=np.int64, count=len(acc))
        coef = np.fromiter(acc.values(), dtype=float, count=len(acc))
        self.rows.append(Row(idx, coef, Sense(sense), float(rhs), tag))
        return len(self.rows) - 1

    # -- array views --------------------------------------------------------

    def matrix(self, rows: Iterable[Row] | None = None) -> sparse.csr_matrix:
        rows = self.rows if rows is None else list(rows)
        indptr = [0]
        indices: list[np.ndarray] = []
        data: list[np.ndarray] = []
        for r in rows:
            indices.append(r.idx)
            data.append(r.coef)
            indptr.append(indptr[-1] + r.idx.size)
        if rows:
            ind = np.concatenate(indices)
            dat = np.concatenate(data)
        else:
            ind = np.zeros(0, dtype=np.int64)
            dat = np.zeros(0)
        return sparse.csr_matrix((dat, ind, np.asarray(indptr)), shape=(len(rows), self.n_vars))

    def split(self):
        """``(A_ub, b_ub, A_eq, b_eq)`` as sparse matrices and dense vectors."""
        le = [r for r in self.rows if r.sense is Sense.LE]
        eq = [r for r in self.rows if r.sense is Sense.EQ]
        return (
            self.matrix(le),
            np.array([r.rhs for r in le]),
            self.matrix(eq),
            np.array([r.rhs for r in eq]),
        )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lb), np.array(self.ub)

    def objective(self) -> np.ndarray:
        return np.array(self.obj)

    # -- checks -------------------------------------------------------------

    def violation(self, x) -> float:
        """Largest row, bound or integrality violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        lb, ub = self.bounds()
        worst = max(worst, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        for r in self.rows:
            lhs = float(r.coef @ x[r.idx])
            gap = lhs - r.rhs
            worst = max(worst, abs(gap) if r.sense is Sense.EQ else gap)
        b = self.binaries
        if b.size:
            worst = max(worst, float(np.max(np.abs(x[b] - np.round(x[b])))))
        return worst

    def value(self, x) -> float:
        return float(np.dot(self.obj, x))

    # -- debugging dump -------------------------------------------------------

    def to_lp_text(self) -> str:
        """Human-readable LP-style dump with stable ordering."""

        def name(j: int) -> str:
            t = self.tags[j]
            if t.role == "aux" and t.vehicle < 0:
                return f"x{j}"
            return f"{t.role}_v{t.vehicle}_k{t.step}_{t.index}#{j}"

        def expr(idx, coef) -> str:
            parts = [f"{'+' if a >= 0 else '-'} {abs(a):.12g} {name(j)}" for j, a in zip(idx, coef)]
            return " ".join(parts) if parts else "0"

        obj_idx = [j for j, c in enumerate(self.obj) if c != 0.0]
        lines = ["Minimize", "  obj: " + expr(obj_idx, [self.obj[j] for j in obj_idx]), "Subject To"]
        for i, r in enumerate(self.rows):
            order = np.argsort(r.idx, kind="stable")
            label = f"r{i}" + (f"_{r.tag}" if r.tag else "")
            lines.append(f"  {label}: {expr(r.idx[order], r.coef[order])} {r.sense.value} {r.rhs:.12g}")
        lines.append("Bounds")
        for j in range(self.n_vars):
            if not self.is_binary[j]:
                lines.append(f"  {self.lb[j]:.12g} <= {name(j)} <= {self.ub[j]:.12g}")
        bins = [name(j) for j in self.binaries]
        if bins:
            lines.append("Binaries")
            lines.extend(f"  {b}" for b in bins)
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class MilpSolution:
    status: Status
    objective: float = math.inf
    x: np.ndarray | None = None
    nodes: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

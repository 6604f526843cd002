"""Dense two-phase tableau simplex.

Small and slow, but free of external solver code: it is the LP engine behind
the brute-force MILP oracle and an optional engine for branch-and-bound.
Dantzig pricing switches to Bland's rule after a run of degenerate pivots,
which guarantees termination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .model import Status

TOL = 1e-9
BLAND_AFTER = 30


@dataclass
class LpResult:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.inf
    iterations: int = 0


def _dense(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    if sparse.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, ncols) if M.size else np.zeros((0, ncols))


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T  # last row holds reduced costs, last column the rhs
        self.basis = basis
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = c
        self.iterations += 1

    def set_objective(self, cost: np.ndarray) -> None:
        ncol = self.T.shape[1] - 1
        row = np.zeros(ncol + 1)
        row[: cost.size] = cost
        cb = row[self.basis]
        row -= cb @ self.T[:-1]
        self.T[-1] = row

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        degenerate = 0
        while True:
            if self.iterations >= max_iter:
                return Status.ITER_LIMIT
            red = self.T[-1, :-1]
            cand = np.flatnonzero((red < -TOL) & allowed)
            if cand.size == 0:
                return Status.OPTIMAL
            bland = degenerate >= BLAND_AFTER
            c = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            col = self.T[:-1, c]
            rows = np.flatnonzero(col > TOL)
            if rows.size == 0:
                return Status.UNBOUNDED
            ratios = self.T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + TOL * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            degenerate = degenerate + 1 if best <= TOL else 0
            self.pivot(r, c)


def solve_lp(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lb=None,
    ub=None,
    max_iter: int | None = None,
) -> LpResult:
    """Minimize ``c.x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lb <= x <= ub``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = _dense(A_ub, n)
    A_eq = _dense(A_eq, n)
    b_ub = np.asarray(b_ub if b_ub is not None else np.zeros(0), dtype=float)
    b_eq = np.asarray(b_eq if b_eq is not None else np.zeros(0), dtype=float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub + TOL):
        return LpResult(Status.INFEASIBLE)

    # x = x0 + Tm y with y >= 0
    cols = []
    x0 = np.zeros(n)
    extra_rows = []  # (column in y, upper bound)
    for j in range(n):
        if np.isfinite(lb[j]):
            x0[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_rows.append((len(cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            x0[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    Tm = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        Tm[j, k] = s

    Aub_y = A_ub @ Tm
    bub_y = b_ub - A_ub @ x0
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        for r, (k, bound) in enumerate(extra_rows):
            E[r, k] = 1.0
        Aub_y = np.vstack([Aub_y, E])
        bub_y = np.concatenate([bub_y, [b for _, b in extra_rows]])
    Aeq_y = A_eq @ Tm
    beq_y = b_eq - A_eq @ x0
    cost = Tm.T @ c
    const = float(c @ x0)

    m_ub, m_eq = Aub_y.shape[0], Aeq_y.shape[0]
    m = m_ub + m_eq
    if m == 0:
        if np.any(cost < -TOL):
            return LpResult(Status.UNBOUNDED)
        return LpResult(Status.OPTIMAL, x0.copy(), const)

    A = np.zeros((m, ny + m_ub))
    A[:m_ub, :ny] = Aub_y
    A[:m_ub, ny:] = np.eye(m_ub)
    A[m_ub:, :ny] = Aeq_y
    b = np.concatenate([bub_y, beq_y])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    basis = [-1] * m
    for i in range(m_ub):
        if not neg[i]:
            basis[i] = ny + i
    need_art = [i for i in range(m) if basis[i] < 0]
    n_struct = ny + m_ub
    ncol = n_struct + len(need_art)
    T = np.zeros((m + 1, ncol + 1))
    T[:m, :n_struct] = A
    T[:m, -1] = b
    for k, i in enumerate(need_art):
        T[i, n_struct + k] = 1.0
        basis[i] = n_struct + k
    tab = _Tableau(T, basis)
    max_iter = max_iter or 50 * (m + ncol) + 1000

    if need_art:
        art_cost = np.zeros(ncol)
        art_cost[n_struct:] = 1.0
        tab.set_objective(art_cost)
        status = tab.run(np.ones(ncol, dtype=bool), max_iter)
        if status is Status.ITER_LIMIT:
            return LpResult(status, iterations=tab.iterations)
        if -tab.T[-1, -1] > 1e-7 * (1.0 + np.abs(b).max()):
            return LpResult(Status.INFEASIBLE, iterations=tab.iterations)
        # drive artificials out of the basis, dropping redundant rows
        keep = []
        for r in range(tab.m):
            if tab.basis[r] >= n_struct:
                row = tab.T[r, :n_struct]
                cand = np.flatnonzero(np.abs(row) > 1e-7)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                    keep.append(r)
            else:
                keep.append(r)
        T2 = np.vstack([tab.T[keep][:, list(range(n_struct)) + [ncol]], np.zeros((1, n_struct + 1))])
        tab = _Tableau(T2, [tab.basis[r] for r in keep])
        tab.iterations = 0
        ncol = n_struct

    tab.set_objective(cost)
    status = tab.run(np.ones(ncol, dtype=bool), max_iter)
    if status is not Status.OPTIMAL:
        return LpResult(status, iterations=tab.iterations)
    y = np.zeros(ncol)
    for r, j in enumerate(tab.basis):
        y[j] = tab.T[r, -1]
    x = x0 + Tm @ y[:ny]
    return LpResult(Status.OPTIMAL, x, float(c @ x), tab.iterations)

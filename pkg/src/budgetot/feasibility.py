"""Sufficient feasibility conditions, priority marginals and a feasible start."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import BudgetOTError, BudgetSpec, Marginals

# slack for comparing sums of floats that are equal in exact arithmetic
_CMP_TOL = 1e-12
_DUST = 1e-14


class PriorityHOutOfRange(BudgetOTError):
    pass


class PriorityConstructionInfeasible(BudgetOTError):
    pass


class InitInfeasible(BudgetOTError):
    pass


@dataclass(frozen=True)
class PrioritySpec:
    """Rows that must be matched to at least ``h`` columns."""

    prioritized: frozenset
    h: int

    def __init__(self, prioritized: Iterable[int], h: int):
        object.__setattr__(self, "prioritized", frozenset(int(i) for i in prioritized))
        object.__setattr__(self, "h", int(h))

    def check(self, m: int, budget: BudgetSpec) -> None:
        if not 1 <= self.h <= budget.rho_s - 1:
            raise PriorityHOutOfRange(f"h={self.h} outside [1, rho_s - 1] = [1, {budget.rho_s - 1}]")
        if any(i < 0 or i >= m for i in self.prioritized):
            raise PriorityHOutOfRange("prioritized index out of range")

    def ratio(self, m: int) -> float:
        return len(self.prioritized) / m


def smallest_sum(v: np.ndarray, k: int) -> float:
    """Sum of the ``k`` smallest entries (0 for ``k <= 0``)."""
    if k <= 0:
        return 0.0
    return float(np.sort(v)[:k].sum())


def largest_sum(v: np.ndarray, k: int) -> float:
    if k <= 0:
        return 0.0
    return float(np.sort(v)[::-1][:k].sum())


def nonempty_bounds(ab: Marginals, budget: BudgetSpec) -> dict:
    """Both sides of the row (4) and column (5) sufficient conditions."""
    return {
        "4": (float(ab.a.max()), smallest_sum(ab.b, budget.rho_s - 1)),
        "5": (float(ab.b.max()), smallest_sum(ab.a, budget.rho_t - 1)),
    }


def check_theorem1(ab: Marginals, budget: BudgetSpec) -> bool:
    """Sufficient condition for a non-empty budget-constrained transport polytope.

    Every row mass must fit in the ``rho_s - 1`` smallest column masses and
    vice versa. A ``False`` result does not prove infeasibility.
    """
    return all(lhs <= rhs + _CMP_TOL for lhs, rhs in nonempty_bounds(ab, budget).values())


def priority_bounds(ab: Marginals, budget: BudgetSpec, prio: PrioritySpec) -> dict:
    """Row-side (6) and column-side (7) priority bounds.

    (6) compares the smallest prioritized row mass with the sum of the ``h``
    largest column masses. (7) is the column analogue evaluated for every
    column; it is reported but not required for row priorities.
    """
    prio.check(ab.m, budget)
    need_row = largest_sum(ab.b, prio.h)
    have_row = float(min(ab.a[i] for i in prio.prioritized)) if prio.prioritized else float("inf")
    need_col = largest_sum(ab.a, prio.h)
    return {"6": (have_row, need_row), "7": (float(ab.b.min()), need_col)}


def check_priority_conditions(ab: Marginals, budget: BudgetSpec, prio: PrioritySpec) -> bool:
    have, need = priority_bounds(ab, budget, prio)["6"]
    return have >= need - _CMP_TOL


def build_prioritized_marginals(m: int, n: int, prioritized: Iterable[int], h: int,
                                budget: BudgetSpec) -> Marginals:
    """Uniform ``b`` and a row marginal giving each prioritized row mass ``h/n``.

    The remaining mass is spread evenly over the other rows. Requires
    ``n <= m*h`` and a positive leftover mass.
    """
    prio = PrioritySpec(prioritized, h)
    prio.check(m, budget)
    budget.check_shape(m, n)
    k = len(prio.prioritized)
    if k == 0:
        ab = Marginals(np.full(m, 1.0 / m), np.full(n, 1.0 / n), normalize=True)
    else:
        if n > m * h:
            raise PriorityConstructionInfeasible(f"n={n} exceeds m*h={m * h}")
        rest = 1.0 - k * h / n
        if k == m or rest <= 0:
            raise PriorityConstructionInfeasible("no mass left for non-prioritized rows")
        a = np.full(m, rest / (m - k))
        idx = np.array(sorted(prio.prioritized))
        a[idx] = h / n
        # absorb rounding in the non-prioritized rows so the sum is 1 to the ulp
        other = np.setdiff1d(np.arange(m), idx)
        a[other] += (1.0 - a.sum()) / other.size
        ab = Marginals(a, np.full(n, 1.0 / n), normalize=False)
    if not check_theorem1(ab, budget):
        raise PriorityConstructionInfeasible("constructed marginals fail the non-emptiness conditions")
    if prio.prioritized and not check_priority_conditions(ab, budget, prio):
        raise PriorityConstructionInfeasible("constructed marginals fail the priority condition")
    return ab


def northwest_init(ab: Marginals, budget: BudgetSpec, require_conditions: bool = True) -> np.ndarray:
    """Northwest-corner transport plan, checked against both budgets.

    With ``require_conditions=False`` the non-emptiness conditions are not
    required up front; the plan is still rejected if it breaks a budget.
    """
    if require_conditions and not check_theorem1(ab, budget):
        raise InitInfeasible("non-emptiness conditions fail; no feasible start is guaranteed")
    a, b = ab.a, ab.b
    m, n = a.size, b.size
    T = np.zeros((m, n))
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while i < m and j < n:
        x = min(ra[i], rb[j])
        T[i, j] += x
        ra[i] -= x
        rb[j] -= x
        # residual dust below _DUST would otherwise open an extra cell
        if ra[i] <= _DUST:
            i += 1
        if rb[j] <= _DUST:
            j += 1
    T = np.maximum(T, 0.0)
    row_nnz = np.count_nonzero(T, axis=1).max()
    col_nnz = np.count_nonzero(T, axis=0).max()
    if row_nnz > budget.rho_s or col_nnz > budget.rho_t:
        raise InitInfeasible(
            f"northwest plan uses {row_nnz} entries per row / {col_nnz} per column, "
            f"budgets are {budget.rho_s} / {budget.rho_t}"
        )
    return T

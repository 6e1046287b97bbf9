"""Evaluation metrics for transport plans used as matchings."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .core import DEFAULT_ZERO_TOL, BudgetOTError, BudgetSpec, DimensionMismatch, as_array


class EmptyPlan(BudgetOTError):
    pass


class EmptyTruth(BudgetOTError):
    pass


class NoPrioritizedPoints(BudgetOTError):
    pass


class RankOutOfRange(BudgetOTError):
    pass


def _pattern(T, zero_tol: float) -> np.ndarray:
    return as_array(T) > zero_tol


def density_percent(T, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """Percentage of entries above ``zero_tol``."""
    nz = _pattern(T, zero_tol)
    return 100.0 * np.count_nonzero(nz) / nz.size


def prioritized_match_counts(T, prioritized: Iterable[int], zero_tol: float = DEFAULT_ZERO_TOL) -> tuple:
    """(non-zeros in prioritized rows, all non-zeros)."""
    nz = _pattern(T, zero_tol)
    rows = np.zeros(nz.shape[0], dtype=bool)
    idx = list(prioritized)
    if idx:
        rows[idx] = True
    return int(np.count_nonzero(nz[rows])), int(np.count_nonzero(nz))


def pppm(T, prioritized: Iterable[int], zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """Share of all matched pairs that involve a prioritized row."""
    hit, total = prioritized_match_counts(T, prioritized, zero_tol)
    if total == 0:
        raise EmptyPlan("plan has no non-zero entries")
    return hit / total


def psmbpp(T, prioritized: Iterable[int], budget: BudgetSpec, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """Matched pairs of prioritized rows over their total row budget."""
    idx = sorted(set(prioritized))
    if not idx:
        raise NoPrioritizedPoints("no prioritized rows given")
    hit, _ = prioritized_match_counts(T, idx, zero_tol)
    return hit / (budget.rho_s * len(idx))


def topk_coverage(T, ranks, k: int, cap: int, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """Percentage of available rank-``<= k`` slots filled by the plan.

    For each row the available slots are ``min(cap, #columns with rank <= k)``
    and the filled slots are the matched columns with rank ``<= k``, capped at
    the same number. The result is the total filled over the total available.
    """
    nz = _pattern(T, zero_tol)
    R = np.asarray(ranks)
    if R.shape != nz.shape:
        raise DimensionMismatch(f"ranks {R.shape} do not match plan {nz.shape}")
    if k < 1 or cap < 1 or np.any(R < 1):
        raise RankOutOfRange("ranks, k and cap must all be at least 1")
    good = R <= k
    avail = np.minimum(good.sum(axis=1), cap)
    filled = np.minimum((good & nz).sum(axis=1), avail)
    if avail.sum() == 0:
        return 0.0
    return 100.0 * filled.sum() / avail.sum()


def precision_recall_f1(T, truth, zero_tol: float = DEFAULT_ZERO_TOL) -> tuple:
    """Precision, recall and F1 of the plan's non-zero pattern against ``truth`` pairs."""
    nz = _pattern(T, zero_tol)
    predicted = {(int(i), int(j)) for i, j in zip(*np.nonzero(nz))}
    truth = {(int(i), int(j)) for i, j in truth}
    if not predicted:
        raise EmptyPlan("plan has no non-zero entries")
    if not truth:
        raise EmptyTruth("truth set is empty")
    hit = len(predicted & truth)
    precision = hit / len(predicted)
    recall = hit / len(truth)
    f1 = 0.0 if hit == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1

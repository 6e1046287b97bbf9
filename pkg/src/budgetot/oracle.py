"""Brute-force reference computations for tiny instances.

The global optimum is found by enumerating support masks that respect the
matching budgets and solving the convex problem restricted to each mask.
The restricted problem is solved through its dual (Newton with Levenberg
damping), which shares no code with the penalty iterations of the solver.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import Callable

import numpy as np

from ._restricted import RestrictedInfeasible, restricted_dual, restricted_lp
from .core import BudgetOTError, BudgetSpec, Marginals, NonFiniteObjective, TransportPlan, as_array
from .objective import ObjectiveParams, objective_G
from .projections import _project_rows

MASK_GUARD = 10**6
FEAS_ROUNDS = 200
FEAS_TOL = 1e-8


class CombinatorialBlowup(BudgetOTError):
    pass




def _row_patterns(n: int, k: int) -> np.ndarray:
    pats = [np.zeros(n, dtype=bool)]
    for r in range(1, min(k, n) + 1):
        for cols in itertools.combinations(range(n), r):
            p = np.zeros(n, dtype=bool)
            p[list(cols)] = True
            pats.append(p)
    return np.array(pats)


def count_candidate_masks(m: int, n: int, budget: BudgetSpec) -> int:
    per_row = sum(comb(n, r) for r in range(min(budget.rho_s, n) + 1))
    return per_row**m


def _budget_masks(m: int, n: int, budget: BudgetSpec) -> np.ndarray:
    """All masks with at most rho_s ones per row and rho_t per column, in lexicographic order."""
    total = count_candidate_masks(m, n, budget)
    if total > MASK_GUARD:
        raise CombinatorialBlowup(f"{total} candidate masks exceed the guard of {MASK_GUARD}")
    pats = _row_patterns(n, budget.rho_s)
    idx = np.array(list(itertools.product(range(len(pats)), repeat=m)), dtype=np.int64).reshape(-1, m)
    masks = pats[idx]
    masks = masks[(masks.sum(axis=1) <= budget.rho_t).all(axis=1)]
    # lexicographic order on the flattened 0/1 pattern, most significant entry first
    keys = masks.reshape(len(masks), -1)
    order = np.lexsort(keys[:, ::-1].T)
    return masks[order]


def _batch_feasible(masks: np.ndarray, a: np.ndarray, b: np.ndarray,
                    rounds: int = FEAS_ROUNDS, tol: float = FEAS_TOL) -> np.ndarray:
    """Alternating row/column projections on every mask at once."""
    K, m, n = masks.shape
    if K == 0:
        return np.zeros(0, dtype=bool)
    ok = masks.any(axis=2).all(axis=1) & masks.any(axis=1).all(axis=1)
    big = 10.0
    X = np.where(masks, 1.0 / (m * n), 0.0)
    A = np.broadcast_to(a, (K, m)).reshape(-1)
    B = np.broadcast_to(b, (K, n)).reshape(-1)
    Mt = masks.transpose(0, 2, 1)
    for _ in range(rounds):
        Y = np.where(masks, X, -big).reshape(-1, n)
        X = np.where(masks, _project_rows(Y, A).reshape(K, m, n), 0.0)
        Y = np.where(Mt, X.transpose(0, 2, 1), -big).reshape(-1, m)
        X = np.where(Mt, _project_rows(Y, B).reshape(K, n, m), 0.0).transpose(0, 2, 1)
    viol = np.maximum(np.abs(X.sum(axis=2) - a).max(axis=1), np.abs(X.sum(axis=1) - b).max(axis=1))
    return ok & (viol < tol)


def mask_supports(mask, ab: Marginals) -> bool:
    """True when alternating projections on ``mask`` reach both marginals."""
    mask = np.asarray(mask, dtype=bool)
    return bool(_batch_feasible(mask[None], ab.a, ab.b)[0])


def enumerate_feasible_supports(m: int, n: int, budget: BudgetSpec, ab: Marginals) -> list:
    """Every budget-respecting 0/1 mask that carries some plan in Pi(a, b)."""
    budget.check_shape(m, n)
    masks = _budget_masks(m, n, budget)
    keep = _batch_feasible(masks, ab.a, ab.b)
    return [mk for mk in masks[keep]]


def _maximal(masks: np.ndarray, budget: BudgetSpec) -> np.ndarray:
    # a mask is maximal when every zero sits in a full row or a full column
    row_full = masks.sum(axis=2) >= min(budget.rho_s, masks.shape[2])
    col_full = masks.sum(axis=1) >= min(budget.rho_t, masks.shape[1])
    blocked = row_full[:, :, None] | col_full[:, None, :]
    return (masks | blocked).all(axis=(1, 2))


def restricted_solve(C, ab: Marginals, p: ObjectiveParams, mask) -> tuple:
    """Minimize G over transport plans supported on ``mask``.

    The problem is convex. For ``gamma > 0`` the optimum has the closed form
    ``max(0, 1 - (1-q)(C + lam_i + mu_j)/gamma) ** (1/(1-q))`` on the mask and
    the multipliers come from damped Newton on the concave dual. ``gamma = 0``
    is a plain linear program.
    """
    C = as_array(C).astype(float)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != C.shape:
        raise RestrictedInfeasible(f"mask shape {mask.shape} differs from cost shape {C.shape}")
    if not mask_supports(mask, ab):
        raise RestrictedInfeasible("mask does not carry a plan with the given marginals")
    if p.gamma == 0:
        X = restricted_lp(C, ab.a, ab.b, mask)
    else:
        X = restricted_dual(C, ab.a, ab.b, mask, p)
    return TransportPlan(X), objective_G(C, X, p)


def global_oracle(C, ab: Marginals, budget: BudgetSpec, p: ObjectiveParams) -> tuple:
    """Global minimizer of G over budget-feasible transport plans.

    Enlarging a mask only enlarges the restricted feasible set, so it is
    enough to solve on the maximal budget-respecting masks. Ties go to the
    first mask in lexicographic order.
    """
    C = as_array(C).astype(float)
    m, n = C.shape
    budget.check_shape(m, n)
    masks = _budget_masks(m, n, budget)
    masks = masks[_maximal(masks, budget)]
    masks = masks[_batch_feasible(masks, ab.a, ab.b)]
    if len(masks) == 0:
        raise RestrictedInfeasible("no budget-respecting mask carries the marginals")
    best_plan, best_val = None, np.inf
    for mk in masks:
        plan, val = restricted_solve(C, ab, p, mk)
        if val < best_val:
            best_plan, best_val = plan, val
    return best_plan, float(best_val)


def finite_diff_gradient(f: Callable[[np.ndarray], float], X, h: float = 1e-6,
                         return_flags: bool = False):
    """Central-difference gradient of a scalar function of an array.

    Coordinates in ``[0, h)``, where the backward point would leave the
    non-negative orthant, or where ``f`` is not finite at the backward point,
    use a forward difference instead. With
    ``return_flags=True`` the boolean mask of those coordinates is returned
    as a second value.
    """
    X = np.asarray(as_array(X), dtype=float)
    if not np.isfinite(f(X)):
        raise NonFiniteObjective("f is not finite at X")
    grad = np.zeros_like(X)
    one_sided = np.zeros(X.shape, dtype=bool)
    E = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E[idx] = h
        fp = f(X + E)
        # non-negative entries closer than h to zero would step outside the orthant
        fm = f(X - E) if not 0 <= X[idx] < h else np.nan
        if not np.isfinite(fp):
            raise NonFiniteObjective(f"f is not finite at X + h*e{idx}")
        if np.isfinite(fm):
            grad[idx] = (fp - fm) / (2 * h)
        else:
            grad[idx] = (fp - f(X)) / h
            one_sided[idx] = True
        E[idx] = 0.0
    if return_flags:
        return grad, one_sided
    return grad

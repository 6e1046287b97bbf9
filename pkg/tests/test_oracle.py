import numpy as np
import pytest

from budgetot.core import BudgetSpec, Marginals
from budgetot.objective import ObjectiveParams, deformed_q_entropy, entropy_gradient, objective_G
from budgetot.oracle import (
    CombinatorialBlowup,
    count_candidate_masks,
    enumerate_feasible_supports,
    finite_diff_gradient,
    global_oracle,
    restricted_solve,
)

U2 = Marginals.uniform(2, 2)
C2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def _as_set(masks):
    return {np.asarray(m, dtype=bool).tobytes() for m in masks}


def test_permutation_supports():
    masks = enumerate_feasible_supports(2, 2, BudgetSpec(1, 1), U2)
    assert _as_set(masks) == _as_set([np.eye(2), np.eye(2)[::-1]])


def test_seven_supports_for_two_by_two():
    masks = enumerate_feasible_supports(2, 2, BudgetSpec(2, 2), U2)
    assert len(masks) == 7
    assert np.ones((2, 2), dtype=bool).tobytes() in _as_set(masks)


def test_full_mask_present_for_inactive_budget():
    ab = Marginals([0.2, 0.3, 0.5], [0.6, 0.4])
    masks = enumerate_feasible_supports(3, 2, BudgetSpec(2, 3), ab)
    assert np.ones((3, 2), dtype=bool).tobytes() in _as_set(masks)


def test_mask_count_guard():
    # each row independently picks at most one of two columns
    assert count_candidate_masks(2, 2, BudgetSpec(1, 1)) == 9
    with pytest.raises(CombinatorialBlowup):
        enumerate_feasible_supports(12, 12, BudgetSpec(6, 6), Marginals.uniform(12, 12))


def test_restricted_solve_examples():
    p = ObjectiveParams(0.3, 0.5)
    plan, G = restricted_solve([[2.0]], Marginals([1.0], [1.0]), p, [[True]])
    assert plan.values[0, 0] == pytest.approx(1.0)
    assert G == pytest.approx(2.0 - 0.3 * deformed_q_entropy([[1.0]], 0.5))
    plan, _ = restricted_solve(C2, U2, p, np.eye(2, dtype=bool))
    np.testing.assert_allclose(plan.values, np.diag([0.5, 0.5]), atol=1e-14)
    plan, G = restricted_solve(np.zeros((2, 2)), U2, ObjectiveParams(1.0, 0.0), np.ones((2, 2), dtype=bool))
    np.testing.assert_allclose(plan.values, 0.25, atol=1e-12)
    # grid search over the one free parameter t = T[0, 0]
    grid = np.arange(0, 0.5 + 1e-12, 1e-3)
    vals = [objective_G(np.zeros((2, 2)), [[t, 0.5 - t], [0.5 - t, t]], ObjectiveParams(1.0, 0.0)) for t in grid]
    assert grid[int(np.argmin(vals))] == pytest.approx(0.25, abs=1e-3)
    assert G == pytest.approx(min(vals), abs=1e-6)


def test_restricted_solve_is_stationary_for_general_q(rng):
    C = rng.random((3, 4))
    ab = Marginals(rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4)))
    p = ObjectiveParams(0.1, 0.7)
    plan, G = restricted_solve(C, ab, p, np.ones((3, 4), dtype=bool))
    T = plan.values
    np.testing.assert_allclose(T.sum(axis=1), ab.a, atol=1e-12)
    np.testing.assert_allclose(T.sum(axis=0), ab.b, atol=1e-12)
    # KKT on the support: gradient equals lam_i + mu_j wherever T > 0
    g = C - p.gamma * entropy_gradient(T, p.q)
    pos = T > 1e-10
    i, j = np.nonzero(pos)
    A = np.zeros((i.size, 7))
    A[np.arange(i.size), i] = 1
    A[np.arange(i.size), 3 + j] = 1
    coef, *_ = np.linalg.lstsq(A, g[pos], rcond=None)
    assert np.max(np.abs(A @ coef - g[pos])) < 1e-9


def test_global_oracle_examples():
    plan, _ = global_oracle(C2, U2, BudgetSpec(1, 1), ObjectiveParams(0.01, 0.9))
    np.testing.assert_allclose(plan.values, np.diag([0.5, 0.5]), atol=1e-12)
    rng = np.random.default_rng(5)
    C = rng.random((3, 3))
    ab = Marginals.uniform(3, 3)
    _, G = global_oracle(C, ab, BudgetSpec(1, 1), ObjectiveParams(0.0, 0.5))
    from itertools import permutations
    best = min(sum(C[i, s[i]] for i in range(3)) / 3 for s in permutations(range(3)))
    assert G == pytest.approx(best, abs=1e-9)
    p = ObjectiveParams(0.2, 0.4)
    _, G_full = global_oracle(C, ab, BudgetSpec(3, 3), p)
    _, G_one = restricted_solve(C, ab, p, np.ones((3, 3), dtype=bool))
    assert G_full == pytest.approx(G_one, abs=1e-12)


def test_finite_diff_examples(rng):
    X = rng.normal(size=(3, 2))
    np.testing.assert_allclose(finite_diff_gradient(lambda Y: 0.5 * np.sum(Y ** 2), X), X, atol=1e-8)
    T = rng.uniform(0.1, 1.0, (2, 3))
    np.testing.assert_allclose(finite_diff_gradient(lambda Y: deformed_q_entropy(Y, 0.5), T),
                               entropy_gradient(T, 0.5), rtol=1e-5)
    T[0, 1] = 0.0
    _, flags = finite_diff_gradient(lambda Y: deformed_q_entropy(Y, 0.5), T, return_flags=True)
    assert flags[0, 1] and flags.sum() == 1

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgetot.core import QOutOfRange, SplitState
from budgetot.objective import (
    ObjectiveParams,
    deformed_q_entropy,
    entropy_gradient,
    linear_cost,
    objective_G,
    objective_gradient,
    penalty_gradient_T,
    penalty_J,
)
from budgetot.oracle import finite_diff_gradient

C2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_linear_cost_examples():
    assert linear_cost(C2, [[0.5, 0], [0, 0.5]]) == 0.0
    assert linear_cost(C2, [[0, 0.5], [0.5, 0]]) == 1.0
    assert linear_cost([[2.0]], [[1.0]]) == 2.0


@pytest.mark.parametrize("T,q,expected", [(1.0, 0.0, 0.5), (1.0, 0.5, 2 / 3), (0.25, 0.5, 1 / 3)])
def test_entropy_values(T, q, expected):
    assert deformed_q_entropy([[T]], q) == pytest.approx(expected, rel=1e-14)


def test_entropy_gradient_values():
    assert entropy_gradient([[0.3]], 0.0)[0, 0] == pytest.approx(0.7)
    assert entropy_gradient([[0.25]], 0.5)[0, 0] == pytest.approx(1.0)
    assert entropy_gradient([[0.0]], 0.5)[0, 0] == pytest.approx(2.0)


def test_entropy_gradient_at_zero_matches_one_sided_difference():
    g, flags = finite_diff_gradient(lambda X: deformed_q_entropy(X, 0.5), np.array([[0.0]]), h=1e-10,
                                    return_flags=True)
    assert flags[0, 0]
    assert g[0, 0] == pytest.approx(2.0, rel=1e-4)


def test_q_range():
    with pytest.raises(QOutOfRange):
        deformed_q_entropy([[0.5]], 1.0)
    with pytest.raises(QOutOfRange):
        ObjectiveParams(0.1, -0.1)


def test_objective_values():
    assert objective_G([[0.0]], [[1.0]], ObjectiveParams(1.0, 0.0)) == pytest.approx(-0.5)
    assert objective_G([[2.0]], [[1.0]], ObjectiveParams(3.0, 0.5)) == pytest.approx(0.0, abs=1e-14)
    T = np.array([[0.3, 0.2], [0.1, 0.4]])
    assert objective_G(C2, T, ObjectiveParams(0.0, 0.5)) == linear_cost(C2, T)


def test_penalty_examples():
    p0 = ObjectiveParams(0.0, 0.5)
    zero = np.zeros((1, 1))
    st_ = SplitState(np.ones((1, 1)), zero, zero, zero)
    assert penalty_J([[0.0]], st_, p0, 2.0) == pytest.approx(3.0)
    T = np.array([[0.3, 0.2], [0.1, 0.4]])
    p = ObjectiveParams(0.1, 0.3)
    tied = SplitState.tied(T)
    assert penalty_J(C2, tied, p, 7.0) == pytest.approx(objective_G(C2, T, p))
    np.testing.assert_allclose(penalty_gradient_T(C2, tied, p, 7.0), objective_gradient(C2, T, p))
    Z = np.zeros_like(T)
    np.testing.assert_allclose(penalty_gradient_T(C2, SplitState(T, Z, Z, Z), p0, 0.0), C2)


def test_penalty_gradient_random_state(rng):
    C = rng.random((3, 3))
    T, U, V, W = (rng.uniform(0.05, 1.0, (3, 3)) for _ in range(4))
    p = ObjectiveParams(0.1, 0.3)
    g = penalty_gradient_T(C, SplitState(T, U, V, W), p, 5.0)
    fd = finite_diff_gradient(lambda X: penalty_J(C, SplitState(X, U, V, W), p, 5.0), T)
    np.testing.assert_allclose(fd, g, rtol=1e-5)


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.99), st.integers(0, 2**32 - 1))
def test_entropy_gradient_matches_finite_differences(low, q, seed):
    T = np.random.default_rng(seed).uniform(low, 1.0, (2, 3))
    fd = finite_diff_gradient(lambda X: deformed_q_entropy(X, q), T)
    np.testing.assert_allclose(fd, entropy_gradient(T, q), rtol=1e-5, atol=1e-9)

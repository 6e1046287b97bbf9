import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from budgetot import _kernels
from budgetot.projections import (
    alternating_marginal_projection,
    project_cols_omega2,
    project_rows_omega1,
    project_simplex,
    topk_cols_omega4,
    topk_rows_omega3,
)

finite = st.floats(-5, 5, allow_nan=False)


def test_simplex_examples():
    np.testing.assert_allclose(project_simplex([0.2, 0.8]), [0.2, 0.8], atol=1e-15)
    np.testing.assert_allclose(project_simplex([1, 1]), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex([0.9, 0.1, -0.5]), [0.9, 0.1, 0.0], atol=1e-15)
    np.testing.assert_allclose(project_simplex([3.0, 1.0], mass=2.0), [2.0, 0.0])


def _qp_simplex(v, mass):
    cons = [{"type": "eq", "fun": lambda x: x.sum() - mass}]
    res = minimize(lambda x: 0.5 * np.sum((x - v) ** 2), np.full(v.size, mass / v.size), jac=lambda x: x - v,
                   bounds=[(0, None)] * v.size, constraints=cons, method="SLSQP", options={"ftol": 1e-14})
    return res.x


@given(arrays(float, st.integers(1, 7), elements=finite), st.floats(0.1, 3.0))
def test_simplex_matches_qp_and_kkt(v, mass):
    x = project_simplex(v, mass)
    assert x.min() >= 0 and x.sum() == pytest.approx(mass, abs=1e-12)
    # KKT: x = max(v - tau, 0) with a common tau
    tau = (v - x)[x > 0]
    assert np.ptp(tau) < 1e-10
    assert np.all(v[x == 0] <= tau[0] + 1e-10)
    np.testing.assert_allclose(x, _qp_simplex(v, mass), atol=1e-5)


def test_row_and_column_projections(rng):
    np.testing.assert_allclose(project_rows_omega1([[1, 1]], [1]), [[0.5, 0.5]])
    np.testing.assert_allclose(project_cols_omega2([[1], [1]], [1]), [[0.5], [0.5]])
    M = rng.normal(size=(4, 5))
    P = project_rows_omega1(M, np.full(4, 0.25))
    np.testing.assert_allclose(P.sum(axis=1), 0.25, atol=1e-12)
    for i in range(4):
        np.testing.assert_allclose(P[i], _qp_simplex(M[i], 0.25), atol=1e-5)
    np.testing.assert_allclose(project_rows_omega1(P, np.full(4, 0.25)), P, atol=1e-12)
    b = rng.dirichlet(np.ones(4))
    Q = project_cols_omega2(rng.normal(size=(5, 4)), b)
    np.testing.assert_allclose(Q.sum(axis=0), b, atol=1e-12)


def test_topk_examples():
    np.testing.assert_array_equal(topk_rows_omega3([[3, 1, 2]], 2), [[3, 0, 2]])
    np.testing.assert_array_equal(topk_rows_omega3([[2, 2, 2]], 1), [[2, 0, 0]])
    np.testing.assert_array_equal(topk_cols_omega4([[1], [5], [3]], 1), [[0], [5], [0]])
    M = np.random.default_rng(0).random((3, 4))
    np.testing.assert_array_equal(topk_rows_omega3(M, 4), M)
    np.testing.assert_array_equal(topk_cols_omega4(M, 3), M)


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 1)),
       st.integers(1, 6))
def test_topk_keeps_largest(M, k):
    k = min(k, M.shape[1])
    R = topk_rows_omega3(M, k)
    assert np.all(np.count_nonzero(R, axis=1) <= k)
    for i in range(M.shape[0]):
        kept = R[i][R[i] != 0]
        dropped = M[i][(R[i] == 0) & (M[i] != 0)]
        if kept.size and dropped.size:
            assert dropped.max() <= kept.min()


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite), st.integers(1, 6))
def test_numba_kernels_agree_with_numpy(M, k):
    m, n = M.shape
    a = np.full(m, 1.0 / m)
    b = np.full(n, 1.0 / n)
    out = np.empty_like(M)
    _kernels.project_rows(np.ascontiguousarray(M), a, out)
    np.testing.assert_allclose(out, project_rows_omega1(M, a), atol=1e-14)
    _kernels.project_cols(np.ascontiguousarray(M), b, out)
    np.testing.assert_allclose(out, project_cols_omega2(M, b), atol=1e-14)
    P = np.abs(M)
    _kernels.topk_rows(P, min(k, n), out)
    np.testing.assert_array_equal(out, topk_rows_omega3(P, min(k, n)))
    _kernels.topk_cols(P, min(k, m), out)
    np.testing.assert_array_equal(out, topk_cols_omega4(P, min(k, m)))


def test_alternating_projection_on_mask():
    mask = np.array([[1, 1, 0], [0, 1, 1]], dtype=bool)
    a = np.array([0.5, 0.5])
    b = np.array([0.25, 0.5, 0.25])
    X = alternating_marginal_projection(np.where(mask, 0.3, 0.0), a, b, mask, rounds=50, tol=1e-14,
                                        max_rounds=10000)
    assert np.all(X[~mask] == 0)
    np.testing.assert_allclose(X.sum(axis=1), a, atol=1e-13)
    np.testing.assert_allclose(X.sum(axis=0), b, atol=1e-13)

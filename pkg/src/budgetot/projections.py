"""Closed-form Euclidean projections onto the four split constraint sets.

Row/column scaled-simplex projections use the sort-and-threshold method;
the cardinality sets are handled by keeping the largest entries per row or
column, ties going to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BudgetOutOfRange, DimensionMismatch, NonFiniteInput, as_array


@dataclass(frozen=True)
class ScaledSimplex:
    """The set ``{mass * x : x in the probability simplex of size dim}``."""

    dim: int
    mass: float

    def __post_init__(self):
        if self.dim < 1 or not self.mass > 0:
            raise ValueError("scaled simplex needs dim >= 1 and mass > 0")

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise DimensionMismatch(f"expected a vector of length {self.dim}")
        return project_simplex(v, self.mass)


def _project_rows(V: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Project every row ``V[i]`` onto the simplex of mass ``z[i]``."""
    m, n = V.shape
    if n == 1:
        return z[:, None].copy()
    U = -np.sort(-V, axis=1)
    cssv = np.cumsum(U, axis=1) - z[:, None]
    ind = np.arange(1, n + 1)
    cond = U - cssv / ind > 0
    rho = np.count_nonzero(cond, axis=1)
    theta = cssv[np.arange(m), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def project_simplex(v, mass: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0, sum(x) = mass}``."""
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("cannot project a vector with non-finite entries")
    if not mass > 0:
        raise ValueError("mass must be positive")
    return _project_rows(v[None, :], np.array([float(mass)]))[0]


def _zero_mass_safe(M: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(M)
    pos = z > 0
    if np.any(pos):
        out[pos] = _project_rows(M[pos], z[pos])
    return out


def project_rows_omega1(M, a) -> np.ndarray:
    """Project each row ``i`` onto the simplex scaled by ``a[i]``."""
    M = as_array(M)
    a = np.asarray(a, dtype=float).ravel()
    if M.ndim != 2 or a.size != M.shape[0]:
        raise DimensionMismatch(f"rows of {M.shape} do not match marginal of length {a.size}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput("cannot project a matrix with non-finite entries")
    return _zero_mass_safe(M, a)


def project_cols_omega2(M, b) -> np.ndarray:
    """Project each column ``j`` onto the simplex scaled by ``b[j]``."""
    M = as_array(M)
    b = np.asarray(b, dtype=float).ravel()
    if M.ndim != 2 or b.size != M.shape[1]:
        raise DimensionMismatch(f"columns of {M.shape} do not match marginal of length {b.size}")
    return project_rows_omega1(M.T, b).T.copy()


def _topk_rows(M: np.ndarray, k: int) -> np.ndarray:
    n = M.shape[1]
    M = np.maximum(M, 0.0)
    if k >= n:
        return M
    # stable sort on the negated values keeps the lowest index among ties
    order = np.argsort(-M, axis=1, kind="stable")[:, :k]
    out = np.zeros_like(M)
    rows = np.arange(M.shape[0])[:, None]
    out[rows, order] = M[rows, order]
    return out


def topk_rows_omega3(M, rho_s: int) -> np.ndarray:
    """Keep the ``rho_s`` largest (clamped non-negative) entries of every row."""
    M = as_array(M)
    if not 1 <= rho_s <= M.shape[1]:
        raise BudgetOutOfRange(f"rho_s={rho_s} outside [1, {M.shape[1]}]")
    return _topk_rows(M, int(rho_s))


def topk_cols_omega4(M, rho_t: int) -> np.ndarray:
    """Keep the ``rho_t`` largest (clamped non-negative) entries of every column."""
    M = as_array(M)
    if not 1 <= rho_t <= M.shape[0]:
        raise BudgetOutOfRange(f"rho_t={rho_t} outside [1, {M.shape[0]}]")
    return _topk_rows(M.T, int(rho_t)).T.copy()


def alternating_marginal_projection(M, a, b, mask=None, rounds: int = 50, tol: float = 0.0,
                                    max_rounds: int = 0) -> np.ndarray:
    """Alternate row (a) and column (b) simplex projections on a support.

    Entries outside ``mask`` are held at zero. Each round projects rows then
    columns, so the result has exact column sums and approximate row sums.
    After ``rounds`` rounds the iteration continues while the row-sum
    violation exceeds ``tol``, up to ``max_rounds`` in total. Rows or columns
    whose mask is empty are left at zero.
    """
    X = np.maximum(as_array(M), 0.0)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if mask is None:
        mask = np.ones(X.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    X = np.where(mask, X, 0.0)
    for r in range(max(rounds, max_rounds)):
        X = _masked_rows(X, a, mask)
        X = _masked_rows(X.T, b, mask.T).T
        if r + 1 >= rounds and np.abs(X.sum(axis=1) - a).max() <= tol:
            break
    return X


def _masked_rows(X: np.ndarray, z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # off-mask entries are pushed far below any threshold so they end at zero
    big = np.abs(X).sum() + z.sum() + 1.0
    Y = np.where(mask, X, -big)
    ok = mask.any(axis=1) & (z > 0)
    out = np.zeros_like(X)
    if np.any(ok):
        out[ok] = _project_rows(Y[ok], z[ok])
    return np.where(mask, out, 0.0)

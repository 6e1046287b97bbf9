"""Convex transport subproblem with a fixed support.

For ``gamma > 0`` the minimizer of ``<C, X> - gamma * H_q(X)`` over plans
supported on a mask has the closed form
``X = max(0, 1 - (1-q)(C + lam_i + mu_j)/gamma) ** (1/(1-q))`` on the mask; the
multipliers maximize the concave dual and are found by damped Newton.
"""

import numpy as np

from .core import BudgetOTError
from .objective import objective_G


class RestrictedInfeasible(BudgetOTError):
    pass


def _dual_primal(C, lam, mu, mask, gamma, q):
    s = C + lam[:, None] + mu[None, :]
    base = np.where(mask, 1.0 - (1.0 - q) * s / gamma, 0.0)
    base = np.maximum(base, 0.0)
    X = base ** (1.0 / (1.0 - q))
    if q == 0:
        dX = np.where(base > 0, 1.0, 0.0) / gamma
    else:
        dX = X**q / gamma
    return X, dX


def _dual_value(C, X, lam, mu, a, b, p):
    return objective_G(C, X, p) + lam @ (X.sum(axis=1) - a) + mu @ (X.sum(axis=0) - b)


def restricted_dual(C, a, b, mask, p, tol=1e-13, max_iter=500):
    """Minimizer of G over plans supported on ``mask`` (``gamma > 0``)."""
    m, n = C.shape
    gamma, q = p.gamma, p.q
    big = np.abs(C).max() + 1.0
    # start where each row's cheapest allowed entry sits at the top of the curve
    lam = -np.where(mask, C, big).min(axis=1)
    mu = np.zeros(n)
    X, dX = _dual_primal(C, lam, mu, mask, gamma, q)
    val = _dual_value(C, X, lam, mu, a, b, p)
    tau = 1e-8
    for _ in range(max_iter):
        g = np.concatenate([X.sum(axis=1) - a, X.sum(axis=0) - b])
        if np.abs(g).max() < tol:
            return X
        # dual is concave with Hessian -H; H is the weighted bipartite Laplacian
        H = np.zeros((m + n, m + n))
        H[:m, :m] = np.diag(dX.sum(axis=1))
        H[m:, m:] = np.diag(dX.sum(axis=0))
        H[:m, m:] = dX
        H[m:, :m] = dX.T
        step = 1.0
        while True:
            d = np.linalg.solve(H + tau * np.eye(m + n), g)
            lam_n, mu_n = lam + step * d[:m], mu + step * d[m:]
            Xn, dXn = _dual_primal(C, lam_n, mu_n, mask, gamma, q)
            val_n = _dual_value(C, Xn, lam_n, mu_n, a, b, p)
            if val_n >= val - 1e-15 * max(1.0, abs(val)):
                break
            step *= 0.5
            if step < 1e-12:
                tau *= 10.0
                step = 1.0
                if tau > 1e8:
                    raise RestrictedInfeasible("dual Newton failed to make progress")
        lam, mu, X, dX, val = lam_n, mu_n, Xn, dXn, val_n
        tau = max(tau / 10.0, 1e-12)
    raise RestrictedInfeasible("dual Newton did not reach the marginal tolerance")


def restricted_lp(C, a, b, mask):
    from scipy.optimize import linprog

    m, n = C.shape
    cells = np.argwhere(mask)
    A_eq = np.zeros((m + n, len(cells)))
    for k, (i, j) in enumerate(cells):
        A_eq[i, k] = 1.0
        A_eq[m + j, k] = 1.0
    res = linprog(C[mask], A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RestrictedInfeasible(f"linear program on mask failed: {res.message}")
    X = np.zeros_like(C)
    X[mask] = np.maximum(res.x, 0.0)
    return X

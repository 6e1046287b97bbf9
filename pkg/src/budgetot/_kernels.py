"""Compiled inner loop of the penalty method.

Mirrors ``solver.inner_loop`` operation for operation: Armijo projected
gradient step on T, then exact U/V/W updates. Membership of every iterate in
its constraint set and monotonicity of the penalty function are tracked
inside the loop and returned as diagnostics.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _simplex_row(v, mass, out, active):
    # Michelot's active-set method: exact, no sorting, no allocation
    n = v.size
    if mass <= 0.0:
        for j in range(n):
            out[j] = 0.0
        return
    total = 0.0
    for j in range(n):
        active[j] = True
        total += v[j]
    count = n
    theta = (total - mass) / n
    while True:
        total = 0.0
        kept = 0
        for j in range(n):
            if active[j]:
                if v[j] > theta:
                    total += v[j]
                    kept += 1
                else:
                    active[j] = False
        if kept == count:
            break
        count = kept
        theta = (total - mass) / kept
    for j in range(n):
        x = v[j] - theta
        out[j] = x if x > 0.0 else 0.0


@njit(cache=True)
def project_rows(M, a, out):
    m, n = M.shape
    row = np.empty(n)
    res = np.empty(n)
    active = np.empty(n, dtype=np.bool_)
    for i in range(m):
        for j in range(n):
            row[j] = M[i, j]
        _simplex_row(row, a[i], res, active)
        for j in range(n):
            out[i, j] = res[j]


@njit(cache=True)
def project_cols(M, b, out):
    m, n = M.shape
    col = np.empty(m)
    res = np.empty(m)
    active = np.empty(m, dtype=np.bool_)
    for j in range(n):
        for i in range(m):
            col[i] = M[i, j]
        _simplex_row(col, b[j], res, active)
        for i in range(m):
            out[i, j] = res[i]


@njit(cache=True)
def topk_rows(M, k, out):
    # k passes of max selection; strict comparison keeps the lowest index on ties
    m, n = M.shape
    taken = np.empty(n, dtype=np.bool_)
    for i in range(m):
        for j in range(n):
            taken[j] = False
            out[i, j] = 0.0
        for _ in range(min(k, n)):
            best = -1
            bv = -1.0
            for j in range(n):
                if not taken[j]:
                    x = M[i, j]
                    x = x if x > 0.0 else 0.0
                    if x > bv:
                        bv = x
                        best = j
            taken[best] = True
            out[i, best] = bv


@njit(cache=True)
def topk_cols(M, k, out):
    m, n = M.shape
    taken = np.empty(m, dtype=np.bool_)
    for j in range(n):
        for i in range(m):
            taken[i] = False
            out[i, j] = 0.0
        for _ in range(min(k, m)):
            best = -1
            bv = -1.0
            for i in range(m):
                if not taken[i]:
                    x = M[i, j]
                    x = x if x > 0.0 else 0.0
                    if x > bv:
                        bv = x
                        best = i
            taken[best] = True
            out[best, j] = bv


@njit(cache=True)
def penalty_value(C, T, U, V, W, gamma, q, sigma):
    return objective_value(C, T, gamma, q, np.empty(T.shape)) + 0.5 * sigma * coupling(T, U, V, W)


@njit(cache=True)
def objective_value(C, T, gamma, q, P1):
    """G(T); fills ``P1`` with ``T**(1-q)`` (0 at 0) for reuse by the gradient."""
    m, n = T.shape
    lin = 0.0
    ent = 0.0
    for i in range(m):
        for j in range(n):
            t = T[i, j]
            lin += C[i, j] * t
            p1 = t ** (1.0 - q) if t > 0.0 else 0.0
            P1[i, j] = p1
            ent += (t * p1 - t) / (1.0 - q) - t
    return lin + gamma * ent / (2.0 - q)


@njit(cache=True)
def coupling(T, U, V, W):
    m, n = T.shape
    pen = 0.0
    for i in range(m):
        for j in range(n):
            t = T[i, j]
            d1 = t - U[i, j]
            d2 = t - V[i, j]
            d3 = t - W[i, j]
            pen += d1 * d1 + d2 * d2 + d3 * d3
    return pen


@njit(cache=True)
def penalty_grad(C, T, U, V, W, P1, gamma, q, sigma, D):
    m, n = T.shape
    for i in range(m):
        for j in range(n):
            D[i, j] = (C[i, j] - gamma * (1.0 - P1[i, j]) / (1.0 - q)
                       + sigma * (3.0 * T[i, j] - U[i, j] - V[i, j] - W[i, j]))


@njit(cache=True)
def inner_loop_kernel(C, T, U, V, W, a, b, rho_s, rho_t, gamma, q, sigma, eps, max_inner,
                      init_step, shrink, c1, max_backtracks, adaptive, slack, trace):
    """Run the inner loop in place on T, U, V, W.

    Returns (iters, capped, monotone_violation_at, worst_row, worst_col,
    worst_row_nnz, worst_col_nnz); ``trace[l]`` receives the penalty value
    after iteration ``l``.
    """
    m, n = T.shape
    D = np.empty((m, n))
    Y = np.empty((m, n))
    Tn = np.empty((m, n))
    P1 = np.empty((m, n))
    P1n = np.empty((m, n))
    G = objective_value(C, T, gamma, q, P1)
    J = G + 0.5 * sigma * coupling(T, U, V, W)
    start = init_step
    iters = 0
    violation_at = -1
    worst_row = 0.0
    worst_col = 0.0
    worst_rnnz = 0
    worst_cnnz = 0
    while True:
        penalty_grad(C, T, U, V, W, P1, gamma, q, sigma, D)
        eta = start
        accepted = False
        last = eta
        Gn = G
        for _ in range(max_backtracks):
            for i in range(m):
                for j in range(n):
                    Y[i, j] = T[i, j] - eta * D[i, j]
            project_rows(Y, a, Tn)
            Gn = objective_value(C, Tn, gamma, q, P1n)
            Jn = Gn + 0.5 * sigma * coupling(Tn, U, V, W)
            sq = 0.0
            for i in range(m):
                for j in range(n):
                    d = T[i, j] - Tn[i, j]
                    sq += d * d
            if np.isfinite(Jn) and Jn <= J - c1 * sq / eta:
                accepted = True
                break
            last = eta
            eta *= shrink
        if not accepted:
            eta = last
            Gn = G
            for i in range(m):
                for j in range(n):
                    Tn[i, j] = T[i, j]
                    P1n[i, j] = P1[i, j]
        if adaptive:
            start = min(init_step, eta / shrink) if accepted else init_step
        project_cols(Tn, b, U)
        topk_rows(Tn, rho_s, V)
        topk_cols(Tn, rho_t, W)
        Jn = Gn + 0.5 * sigma * coupling(Tn, U, V, W)
        if Jn > J + slack * max(1.0, abs(J)) and violation_at < 0:
            violation_at = iters
        step = 0.0
        for i in range(m):
            for j in range(n):
                d = Tn[i, j] - T[i, j]
                step += d * d
                T[i, j] = Tn[i, j]
                P1[i, j] = P1n[i, j]
        step = np.sqrt(step)
        J = Jn
        G = Gn
        trace[iters] = J
        iters += 1

        for i in range(m):
            s = 0.0
            cnt = 0
            for j in range(n):
                s += T[i, j]
                if V[i, j] != 0.0:
                    cnt += 1
            worst_row = max(worst_row, abs(s - a[i]))
            worst_rnnz = max(worst_rnnz, cnt)
        for j in range(n):
            s = 0.0
            cnt = 0
            for i in range(m):
                s += U[i, j]
                if W[i, j] != 0.0:
                    cnt += 1
            worst_col = max(worst_col, abs(s - b[j]))
            worst_cnnz = max(worst_cnnz, cnt)

        if step <= eps:
            return iters, False, violation_at, worst_row, worst_col, worst_rnnz, worst_cnnz
        if iters >= max_inner:
            return iters, True, violation_at, worst_row, worst_col, worst_rnnz, worst_cnnz

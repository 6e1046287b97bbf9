"""Penalty method with alternating projected-gradient inner loops.

The transport plan ``T`` is split into four copies, each constrained to one
simple set: row marginals (T), column marginals (U), row budget (V) and
column budget (W). The coupling ``T = U = V = W`` is enforced by a quadratic
penalty whose weight grows geometrically across outer iterations. Inside an
outer iteration, ``T`` takes an Armijo projected-gradient step and ``U``,
``V``, ``W`` are set to their exact minimizers (projections of ``T``).
"""

from __future__ import annotations

import dataclasses
import logging
import time
import warnings
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import (
    ArmijoParams,
    BudgetOTError,
    BudgetSpec,
    InfeasibleInstance,
    Marginals,
    MaxInnerExceeded,
    MaxOuterExceeded,
    NonFiniteObjective,
    OuterRecord,
    SolverConfig,
    SolverReport,
    SplitState,
    TransportPlan,
    as_array,
    validate_instance,
)
from ._restricted import RestrictedInfeasible, restricted_dual
from .feasibility import InitInfeasible, check_theorem1, northwest_init, nonempty_bounds
from .objective import ObjectiveParams, deformed_q_entropy, entropy_gradient, objective_G, objective_gradient
from .projections import (
    _masked_rows,
    alternating_marginal_projection,
    project_cols_omega2,
    project_rows_omega1,
    topk_cols_omega4,
    topk_rows_omega3,
)

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-10
SNAP_ROUNDS = 50
SNAP_TOL = 1e-13
SNAP_MAX_ROUNDS = 20000


class SupportBudgetViolated(BudgetOTError):
    pass


class MonotonicityError(BudgetOTError):
    """The penalty function increased during an inner iteration."""


def armijo_search(J_eval: Callable[[np.ndarray], float], T, D, a, params: ArmijoParams = ArmijoParams(),
                  J_T: Optional[float] = None):
    """Backtracking line search along the projected gradient path.

    Tries ``eta = init_step * shrink**j`` for ``j = 0, 1, ...`` and accepts the
    first trial point ``T+ = proj(T - eta*D)`` with
    ``J(T+) <= J(T) - c1 * ||T - T+||**2 / eta``. When no trial passes the
    last step size is returned together with ``T`` itself.

    Returns
    -------
    eta, T_next
    """
    eta, T_next, _, _ = _armijo(J_eval, as_array(T), as_array(D), np.asarray(a, dtype=float), params, J_T)
    return eta, T_next


def _armijo(J_eval, T, D, a, params, J_T=None):
    if J_T is None:
        J_T = J_eval(T)
    if not np.isfinite(J_T):
        raise NonFiniteObjective("objective is not finite at the line-search start")
    eta = params.init_step
    for _ in range(params.max_backtracks):
        T_new = project_rows_omega1(T - eta * D, a)
        J_new = J_eval(T_new)
        step_sq = float(np.sum((T - T_new) ** 2))
        if np.isfinite(J_new) and J_new <= J_T - params.c1 * step_sq / eta:
            return eta, T_new, J_new, True
        last = eta
        eta *= params.shrink
    return last, T, J_T, False


class _Penalty:
    """Fast evaluation of the penalty function for fixed U, V, W."""

    def __init__(self, C, p: ObjectiveParams, sigma: float):
        self.C = C
        self.p = p
        self.sigma = sigma

    def G(self, T):
        return float(np.sum(self.C * T)) - self.p.gamma * deformed_q_entropy(T, self.p.q)

    def J(self, T, U, V, W):
        pen = np.sum((T - U) ** 2) + np.sum((T - V) ** 2) + np.sum((T - W) ** 2)
        return self.G(T) + 0.5 * self.sigma * float(pen)

    def grad(self, T, U, V, W):
        return (self.C - self.p.gamma * entropy_gradient(T, self.p.q)
                + self.sigma * (3.0 * T - U - V - W))


def _project_uvw(T, b, budget):
    return project_cols_omega2(T, b), topk_rows_omega3(T, budget.rho_s), topk_cols_omega4(T, budget.rho_t)


class InnerResult(NamedTuple):
    state: SplitState
    iters: int
    capped: bool
    J_trace: np.ndarray
    membership: dict


def _have_numba() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:  # pragma: no cover
        return False
    return True


def inner_loop(C, state: SplitState, p: ObjectiveParams, sigma: float, eps_k: float, max_inner: int,
               a, b, budget: BudgetSpec, armijo: ArmijoParams = ArmijoParams(),
               callback: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float], None]] = None,
               adaptive_step: bool = True, engine: str = "auto") -> InnerResult:
    """Approximately minimize the penalty function at fixed ``sigma``.

    Runs at least one iteration and stops once ``||T_new - T_old||_F <= eps_k``
    or after ``max_inner`` iterations. ``callback(T, U, V, W, J)`` is invoked
    after every iteration (this forces the numpy engine). With
    ``adaptive_step`` each line search starts one backtracking notch above
    the previously accepted step instead of at ``armijo.init_step``.

    ``membership`` in the result holds the worst row-sum error of T,
    column-sum error of U and non-zero counts of V rows / W columns seen
    over all iterations.

    Raises
    ------
    MonotonicityError
        If the penalty function increases by more than the slack.
    """
    C = as_array(C)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    if engine == "auto":
        engine = "numba" if callback is None and _have_numba() else "numpy"
    if engine == "numba":
        if callback is not None:
            raise ValueError("callbacks require the numpy engine")
        return _inner_loop_numba(C, state, p, sigma, eps_k, max_inner, a, b, budget, armijo, adaptive_step)
    if engine != "numpy":
        raise ValueError(f"unknown engine {engine!r}")

    pen = _Penalty(C, p, sigma)
    T, U, V, W = (np.array(x) for x in (state.T, state.U, state.V, state.W))
    J = pen.J(T, U, V, W)
    trace = []
    worst = {"row_sum": 0.0, "col_sum": 0.0, "row_nnz": 0, "col_nnz": 0}
    iters = 0
    params = armijo
    while True:
        D = pen.grad(T, U, V, W)
        eta, T_new, _, ok = _armijo(lambda X: pen.J(X, U, V, W), T, D, a, params, J)
        if adaptive_step:
            # next search starts one notch above the accepted step
            nxt = min(armijo.init_step, eta / armijo.shrink) if ok else armijo.init_step
            params = dataclasses.replace(armijo, init_step=nxt)
        U, V, W = _project_uvw(T_new, b, budget)
        J_new = pen.J(T_new, U, V, W)
        if J_new > J + MONOTONE_SLACK * max(1.0, abs(J)):
            raise MonotonicityError(f"penalty rose from {J!r} to {J_new!r} at inner iteration {iters}")
        step = float(np.sqrt(np.sum((T_new - T) ** 2)))
        T, J = T_new, J_new
        trace.append(J)
        iters += 1
        worst["row_sum"] = max(worst["row_sum"], float(np.max(np.abs(T.sum(axis=1) - a))))
        worst["col_sum"] = max(worst["col_sum"], float(np.max(np.abs(U.sum(axis=0) - b))))
        worst["row_nnz"] = max(worst["row_nnz"], int(np.count_nonzero(V, axis=1).max()))
        worst["col_nnz"] = max(worst["col_nnz"], int(np.count_nonzero(W, axis=0).max()))
        if callback is not None:
            callback(T, U, V, W, J)
        if step <= eps_k or iters >= max_inner:
            return InnerResult(SplitState(T, U, V, W), iters, step > eps_k, np.array(trace), worst)


def _inner_loop_numba(C, state, p, sigma, eps_k, max_inner, a, b, budget, armijo, adaptive_step):
    from ._kernels import inner_loop_kernel

    T, U, V, W = (np.array(x, dtype=float, order="C") for x in (state.T, state.U, state.V, state.W))
    trace = np.empty(max_inner)
    iters, capped, bad, wr, wc, wrn, wcn = inner_loop_kernel(
        np.ascontiguousarray(C), T, U, V, W, a, b, budget.rho_s, budget.rho_t, float(p.gamma), float(p.q),
        float(sigma), float(eps_k), int(max_inner), float(armijo.init_step), float(armijo.shrink),
        float(armijo.c1), int(armijo.max_backtracks), bool(adaptive_step), MONOTONE_SLACK, trace)
    if bad >= 0:
        raise MonotonicityError(f"penalty increased at inner iteration {bad}")
    worst = {"row_sum": wr, "col_sum": wc, "row_nnz": int(wrn), "col_nnz": int(wcn)}
    return InnerResult(SplitState(T, U, V, W), int(iters), bool(capped), trace[:iters].copy(), worst)


def complete_support(T, support, rho_s: int, rho_t: int, zero_tol: float) -> np.ndarray:
    """Greedily extend ``support`` by the largest remaining entries of ``T``.

    An entry is added when both its row and its column still have room under
    the budgets, so the result stays budget-feasible. Every optimum lives on a
    maximal budget-feasible mask, so extending never excludes a better plan.
    """
    support = support.copy()
    rows = np.count_nonzero(support, axis=1)
    cols = np.count_nonzero(support, axis=0)
    if rows.min() >= rho_s or cols.min() >= rho_t:
        return support
    cand = (~support) & (T > zero_tol)
    flat = np.flatnonzero(cand)
    # descending value, lowest flat index first on ties
    flat = flat[np.argsort(-T.ravel()[flat], kind="stable")]
    n = T.shape[1]
    for f in flat:
        i, j = divmod(int(f), n)
        if rows[i] < rho_s and cols[j] < rho_t:
            support[i, j] = True
            rows[i] += 1
            cols[j] += 1
    return support


def snap_to_budget_support(T, V, W, a, b, zero_tol: float, rounds: int = SNAP_ROUNDS,
                           budget: Optional[BudgetSpec] = None) -> np.ndarray:
    """Restrict ``T`` to the common support of ``V`` and ``W`` and re-balance.

    With ``budget`` given, the support is first completed greedily (see
    ``complete_support``). The re-balancing alternates row and column
    marginal projections on the support, so the result satisfies both
    budgets exactly.
    """
    support = snap_support(T, V, W, zero_tol, budget)
    return alternating_marginal_projection(np.where(support, T, 0.0), a, b, support, rounds,
                                           SNAP_TOL, SNAP_MAX_ROUNDS)


def snap_support(T, V, W, zero_tol: float, budget: Optional[BudgetSpec] = None) -> np.ndarray:
    support = (V > zero_tol) & (W > zero_tol)
    if budget is not None:
        support = complete_support(T, support, budget.rho_s, budget.rho_t, zero_tol)
    return support


def _dykstra_on_support(X, a, b, mask, rounds, tol=0.0, max_rounds=None):
    # Dykstra's alternating projection onto {rows = a} and {cols = b} on mask;
    # after ``rounds`` sweeps it continues until the iterate stops moving
    P = np.zeros_like(X)
    Q = np.zeros_like(X)
    limit = rounds if max_rounds is None else max(rounds, max_rounds)
    for r in range(limit):
        Y = _masked_rows(X + P, a, mask)
        P = X + P - Y
        Xn = _masked_rows((Y + Q).T, b, mask.T).T
        Q = Y + Q - Xn
        moved = np.sqrt(np.sum((Xn - X) ** 2))
        X = Xn
        if r + 1 >= rounds and moved <= tol:
            break
    return X


def stationarity_residual(C, T_hat, ab: Marginals, budget: BudgetSpec, p: ObjectiveParams,
                          probe_step: float = 0.1, zero_tol: float = 1e-9, rounds: int = SNAP_ROUNDS,
                          proj_tol: float = 1e-15, max_rounds: int = 20000) -> float:
    """Support-restricted projected-gradient norm of a budget-feasible plan.

    Computes ``||T - P(T - s * grad G(T))||_F / s`` where ``P`` is the
    projection onto transport plans supported on the non-zero pattern of
    ``T``. ``P`` runs at least ``rounds`` Dykstra sweeps and continues until
    a sweep moves the iterate by at most ``proj_tol`` (or ``max_rounds``).
    Zero means ``T`` is stationary for the problem restricted to its own
    support.
    """
    C = as_array(C)
    T = as_array(T_hat)
    support = T > zero_tol
    if (np.count_nonzero(support, axis=1).max() > budget.rho_s
            or np.count_nonzero(support, axis=0).max() > budget.rho_t):
        raise SupportBudgetViolated("plan support exceeds the matching budgets")
    T = np.where(support, T, 0.0)
    X = T - probe_step * objective_gradient(C, T, p)
    X = np.where(support, X, 0.0)
    X = _dykstra_on_support(X, ab.a, ab.b, support, rounds, proj_tol, max_rounds)
    return float(np.sqrt(np.sum((T - X) ** 2)) / probe_step)


def solve(C, ab: Marginals, budget: BudgetSpec, cfg: SolverConfig = SolverConfig(),
          callback: Optional[Callable] = None, initial: Optional[np.ndarray] = None) -> SolverReport:
    """Solve the budget-constrained regularized transport problem.

    Parameters
    ----------
    C, ab, budget : instance data (validated here)
    cfg : SolverConfig
    callback : optional ``callback(k, l, T, U, V, W, J)`` called after every
        inner iteration ``l`` of outer iteration ``k``.
    initial : optional feasible starting plan; defaults to the northwest
        corner plan.

    Raises
    ------
    InfeasibleInstance
        If the marginals fail the sufficient non-emptiness conditions.
    """
    start = time.perf_counter()
    inst = validate_instance(C, ab, budget)
    C = inst.cost.values
    a, b = inst.marginals.a, inst.marginals.b
    if not check_theorem1(inst.marginals, budget):
        bounds = nonempty_bounds(inst.marginals, budget)
        failed = [k for k, (lhs, rhs) in bounds.items() if lhs > rhs + 1e-12]
        detail = ", ".join(f"condition ({k}): {bounds[k][0]:.6g} > {bounds[k][1]:.6g}" for k in failed)
        if cfg.strict_feasibility:
            raise InfeasibleInstance(f"budgets too tight for the marginals; {detail}")
        if initial is None:
            try:
                northwest_init(inst.marginals, budget, require_conditions=False)
            except InitInfeasible as exc:
                raise InfeasibleInstance(f"{exc}; {detail}") from exc
    p = ObjectiveParams(cfg.gamma, cfg.q)
    T0 = (northwest_init(inst.marginals, budget, require_conditions=cfg.strict_feasibility)
          if initial is None else as_array(initial).copy())
    G0 = objective_G(C, T0, p)

    state = SplitState.tied(T0)
    sigma = cfg.sigma0
    records: list[OuterRecord] = []
    total_inner = 0
    converged = False
    membership = {"row_sum": 0.0, "col_sum": 0.0, "row_nnz": 0, "col_nnz": 0}
    for k in range(cfg.max_outer):
        pen = _Penalty(C, p, sigma)
        T, U, V, W = state.T, state.U, state.V, state.W
        D = pen.grad(T, U, V, W)
        _, T_trial, J_trial, _ = _armijo(lambda X: pen.J(X, U, V, W), T, D, a, cfg.armijo)
        restarted = not J_trial <= G0
        if restarted:
            state = SplitState.tied(T0)

        cb = None
        if callback is not None:
            def cb(T, U, V, W, J, _k=k, _it=[0]):
                _it[0] += 1
                callback(_k, _it[0], T, U, V, W, J)

        inner = inner_loop(C, state, p, sigma, cfg.eps(k), cfg.max_inner, a, b, budget, cfg.armijo, cb,
                           engine=cfg.engine)
        state, iters, capped = inner.state, inner.iters, inner.capped
        for key, val in inner.membership.items():
            membership[key] = max(membership[key], val)
        total_inner += iters
        if capped:
            warnings.warn(f"inner loop hit max_inner={cfg.max_inner} at outer iteration {k}", MaxInnerExceeded)
        res = state.residual()
        records.append(OuterRecord(sigma, iters, pen.J(state.T, state.U, state.V, state.W), res,
                                   restarted, capped))
        logger.debug("outer %d sigma=%.3g inner=%d residual=%.3e", k, sigma, iters, res)
        sigma *= cfg.theta
        if res <= cfg.outer_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"residual {records[-1].residual:.3e} above outer_tol after {cfg.max_outer} outer "
                      "iterations", MaxOuterExceeded)

    support = snap_support(state.T, state.V, state.W, cfg.zero_tol,
                           budget if cfg.complete_support else None)
    T_final = alternating_marginal_projection(np.where(support, state.T, 0.0), a, b, support, SNAP_ROUNDS,
                                              SNAP_TOL, SNAP_MAX_ROUNDS)
    unrefined_G = objective_G(C, T_final, p)
    refined = False
    if cfg.refine_support:
        try:
            T_final = restricted_dual(C, a, b, support, p)
            refined = True
        except RestrictedInfeasible:
            logger.warning("support refinement failed; keeping the re-balanced plan")
    violation = float(max(np.max(np.abs(T_final.sum(axis=1) - a)), np.max(np.abs(T_final.sum(axis=0) - b))))
    try:
        stat = stationarity_residual(C, T_final, inst.marginals, budget, p, zero_tol=cfg.zero_tol)
    except SupportBudgetViolated:  # pragma: no cover - the snap keeps budgets by construction
        stat = float("nan")
    return SolverReport(
        final_plan=TransportPlan(T_final),
        outer_iters=len(records),
        total_inner_iters=total_inner,
        objective_G=objective_G(C, T_final, p),
        residual=records[-1].residual,
        stationarity=stat,
        per_outer=records,
        wall_time=time.perf_counter() - start,
        converged=converged,
        snap_distance=float(np.sqrt(np.sum((T_final - state.T) ** 2))),
        marginal_violation=violation,
        refined=refined,
        unrefined_G=unrefined_G,
        state=state,
        config=cfg,
        membership=membership,
    )

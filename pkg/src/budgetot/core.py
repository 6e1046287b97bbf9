"""Domain types and instance validation.

All matrices are dense float64 arrays. The types are frozen dataclasses that
validate on construction; the numerical routines elsewhere in the package
accept either these wrappers or plain arrays.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MARGINAL_TOL = 1e-12
SPLIT_TOL = 1e-9
DEFAULT_ZERO_TOL = 1e-9


class BudgetOTError(ValueError):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BudgetOTError):
    pass


class NonFiniteCost(BudgetOTError):
    pass


class NonFiniteInput(BudgetOTError):
    pass


class NonFiniteObjective(BudgetOTError):
    pass


class MarginalNotSimplex(BudgetOTError):
    pass


class BudgetOutOfRange(BudgetOTError):
    pass


class QOutOfRange(BudgetOTError):
    pass


class InvalidConfig(BudgetOTError):
    pass


class InfeasibleInstance(BudgetOTError):
    pass


class MaxInnerExceeded(RuntimeWarning):
    """Emitted when an inner loop stops at ``max_inner`` iterations."""


class MaxOuterExceeded(RuntimeWarning):
    """Emitted when the outer loop stops at ``max_outer`` iterations."""


def as_array(x) -> np.ndarray:
    """Unwrap ``CostMatrix``/``TransportPlan``-like objects to float arrays."""
    return np.asarray(getattr(x, "values", x), dtype=float)


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionMismatch(f"cost matrix must be 2-D and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteCost("cost matrix contains non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class Marginals:
    """Source and target probability vectors.

    With ``normalize=True`` non-negative inputs are rescaled to sum to one,
    which is convenient for vectors read from text files.
    """

    a: np.ndarray
    b: np.ndarray
    normalize: bool = False

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        for name, v in (("a", a), ("b", b)):
            if v.size == 0:
                raise MarginalNotSimplex(f"marginal {name} is empty")
            if not np.all(np.isfinite(v)):
                raise MarginalNotSimplex(f"marginal {name} has non-finite entries")
            if np.any(v < 0):
                raise MarginalNotSimplex(f"marginal {name} has negative entries")
        if self.normalize:
            if a.sum() <= 0 or b.sum() <= 0:
                raise MarginalNotSimplex("cannot normalize a zero marginal")
            a = a / a.sum()
            b = b / b.sum()
        for name, v in (("a", a), ("b", b)):
            if abs(v.sum() - 1.0) > MARGINAL_TOL:
                raise MarginalNotSimplex(f"marginal {name} sums to {v.sum():.17g}, not 1")
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "b", _readonly(b))
        object.__setattr__(self, "normalize", False)

    @property
    def m(self) -> int:
        return self.a.size

    @property
    def n(self) -> int:
        return self.b.size

    @classmethod
    def uniform(cls, m: int, n: int) -> "Marginals":
        return cls(np.full(m, 1.0 / m), np.full(n, 1.0 / n), normalize=True)


@dataclass(frozen=True)
class BudgetSpec:
    """Per-row (``rho_s``) and per-column (``rho_t``) caps on non-zeros."""

    rho_s: int
    rho_t: int

    def __post_init__(self):
        for name in ("rho_s", "rho_t"):
            v = getattr(self, name)
            if int(v) != v:
                raise BudgetOutOfRange(f"{name} must be an integer, got {v!r}")
            if v < 1:
                raise BudgetOutOfRange(f"{name}={v} is below 1")
            object.__setattr__(self, name, int(v))

    def check_shape(self, m: int, n: int) -> None:
        if self.rho_s > n:
            raise BudgetOutOfRange(f"rho_s={self.rho_s} exceeds the number of columns {n}")
        if self.rho_t > m:
            raise BudgetOutOfRange(f"rho_t={self.rho_t} exceeds the number of rows {m}")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionMismatch(f"plan must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("plan contains non-finite entries")
        if np.any(v < 0):
            raise BudgetOTError("plan has negative entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def shape(self):
        return self.values.shape

    def support(self, zero_tol: float = DEFAULT_ZERO_TOL) -> np.ndarray:
        return self.values > zero_tol

    def nnz(self, zero_tol: float = DEFAULT_ZERO_TOL) -> int:
        return int(np.count_nonzero(self.support(zero_tol)))


def check_split_membership(T, U, V, W, a, b, budget: BudgetSpec, tol: float = SPLIT_TOL) -> list[str]:
    """Return the list of violated split-set memberships (empty when all hold)."""
    problems = []
    for name, X in (("T", T), ("U", U), ("V", V), ("W", W)):
        if np.any(X < 0):
            problems.append(f"{name} has negative entries")
    if np.max(np.abs(T.sum(axis=1) - a)) > tol:
        problems.append("T row sums differ from a")
    if np.max(np.abs(U.sum(axis=0) - b)) > tol:
        problems.append("U column sums differ from b")
    if np.max(np.count_nonzero(V, axis=1)) > budget.rho_s:
        problems.append("V exceeds the row budget")
    if np.max(np.count_nonzero(W, axis=0)) > budget.rho_t:
        problems.append("W exceeds the column budget")
    return problems


@dataclass(frozen=True, eq=False)
class SplitState:
    """The four coupled iterates of the penalty method."""

    T: np.ndarray
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    budget: Optional[BudgetSpec] = None

    def __post_init__(self):
        arrays = [_readonly(as_array(getattr(self, k))) for k in "TUVW"]
        if len({x.shape for x in arrays}) != 1:
            raise DimensionMismatch("split iterates must share one shape")
        for k, x in zip("TUVW", arrays):
            object.__setattr__(self, k, x)
        if self.a is not None and self.b is not None and self.budget is not None:
            problems = check_split_membership(*arrays, self.a, self.b, self.budget)
            if problems:
                raise BudgetOTError("invalid split state: " + "; ".join(problems))

    @classmethod
    def tied(cls, T, **kw) -> "SplitState":
        return cls(T, T, T, T, **kw)

    def residual(self) -> float:
        return float(np.sqrt(
            np.sum((self.T - self.U) ** 2) + np.sum((self.T - self.V) ** 2)
            + np.sum((self.T - self.W) ** 2)
        ))


@dataclass(frozen=True)
class ArmijoParams:
    init_step: float = 1.0
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if not self.init_step > 0:
            raise InvalidConfig("init_step must be positive")
        if not 0 < self.shrink < 1:
            raise InvalidConfig("shrink must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise InvalidConfig("c1 must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise InvalidConfig("max_backtracks must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the penalty method.

    The inner tolerance at outer iteration ``k`` is ``eps_scale * eps_base**k``.
    With ``strict_feasibility`` off, instances that fail the sufficient
    non-emptiness conditions are still attempted when the northwest-corner
    start respects the budgets. ``complete_support`` extends the final
    support greedily up to the budgets before re-balancing, and
    ``refine_support`` re-solves the objective on
    the support selected by the penalty iterations instead of only
    re-balancing the marginals there.
    """

    gamma: float = 0.1
    q: float = 0.9
    sigma0: float = 10.0
    theta: float = 2.0
    eps_base: float = 0.99
    eps_scale: float = 1e-6
    outer_tol: float = 1e-4
    max_outer: int = 200
    max_inner: int = 10000
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    zero_tol: float = DEFAULT_ZERO_TOL
    seed: int = 0
    engine: str = "auto"
    strict_feasibility: bool = True
    complete_support: bool = True
    refine_support: bool = True

    def __post_init__(self):
        if self.engine not in ("auto", "numba", "numpy"):
            raise InvalidConfig(f"unknown engine {self.engine!r}")
        if isinstance(self.armijo, dict):
            object.__setattr__(self, "armijo", ArmijoParams(**self.armijo))
        if not self.gamma > 0:
            raise InvalidConfig("gamma must be positive")
        if not 0 <= self.q < 1:
            raise QOutOfRange(f"q={self.q} outside [0, 1); use e.g. q=0.999 for near-Shannon behaviour")
        if not self.sigma0 > 0:
            raise InvalidConfig("sigma0 must be positive")
        if not self.theta > 1:
            raise InvalidConfig("theta must exceed 1")
        if not 0 < self.eps_base < 1:
            raise InvalidConfig("eps_base must lie in (0, 1)")
        if not self.eps_scale > 0 or not self.outer_tol > 0 or not self.zero_tol > 0:
            raise InvalidConfig("eps_scale, outer_tol and zero_tol must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidConfig("iteration caps must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be unsigned")

    def eps(self, k: int) -> float:
        return self.eps_scale * self.eps_base ** k

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class OuterRecord:
    sigma: float
    inner_iters: int
    J_value: float
    residual: float
    restarted: bool = False
    inner_capped: bool = False


@dataclass
class SolverReport:
    final_plan: TransportPlan
    outer_iters: int
    total_inner_iters: int
    objective_G: float
    residual: float
    stationarity: float
    per_outer: list[OuterRecord]
    wall_time: float
    converged: bool = True
    snap_distance: float = 0.0
    marginal_violation: float = 0.0
    refined: bool = False
    unrefined_G: float = float("nan")
    state: Optional[SplitState] = None
    config: Optional[SolverConfig] = None
    membership: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "converged": self.converged,
            "outer_iters": self.outer_iters,
            "total_inner_iters": self.total_inner_iters,
            "objective_G": self.objective_G,
            "residual": self.residual,
            "stationarity": self.stationarity,
            "stationarity_kind": "support-restricted",
            "snap_distance": self.snap_distance,
            "marginal_violation": self.marginal_violation,
            "refined": self.refined,
            "unrefined_G": self.unrefined_G,
            "shape": list(self.final_plan.shape),
            "membership": self.membership,
            "per_outer": [dataclasses.asdict(r) for r in self.per_outer],
        }
        if self.config is not None:
            d["config"] = self.config.to_dict()
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass(frozen=True, eq=False)
class ValidatedInstance:
    cost: CostMatrix
    marginals: Marginals
    budget: BudgetSpec

    @property
    def shape(self):
        return self.cost.shape

    def __eq__(self, other):
        if not isinstance(other, ValidatedInstance):
            return NotImplemented
        return (
            self.budget == other.budget
            and np.array_equal(self.cost.values, other.cost.values)
            and np.array_equal(self.marginals.a, other.marginals.a)
            and np.array_equal(self.marginals.b, other.marginals.b)
        )

    __hash__ = None


def validate_instance(C, ab: Optional[Marginals] = None, budget: Optional[BudgetSpec] = None) -> ValidatedInstance:
    """Check a (cost, marginals, budget) triple and bundle it.

    Passing an already validated instance returns an equal instance.
    """
    if isinstance(C, ValidatedInstance):
        C, ab, budget = C.cost, C.marginals, C.budget
    if ab is None or budget is None:
        raise TypeError("marginals and budget are required")
    cost = C if isinstance(C, CostMatrix) else CostMatrix(as_array(C))
    if not isinstance(ab, Marginals):
        ab = Marginals(*ab)
    if not isinstance(budget, BudgetSpec):
        budget = BudgetSpec(*budget)
    m, n = cost.shape
    if ab.m != m or ab.n != n:
        raise DimensionMismatch(f"cost is {m}x{n} but marginals have lengths {ab.m} and {ab.n}")
    budget.check_shape(m, n)
    return ValidatedInstance(cost, ab, budget)

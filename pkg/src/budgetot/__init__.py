"""Sparse optimal transport with per-row and per-column budgets on non-zeros."""

__version__ = "0.1.0"

from .core import (
    ArmijoParams,
    BudgetOTError,
    BudgetSpec,
    CostMatrix,
    InfeasibleInstance,
    Marginals,
    SolverConfig,
    SolverReport,
    TransportPlan,
    validate_instance,
)
from .feasibility import PrioritySpec, build_prioritized_marginals, check_theorem1, northwest_init
from .metrics import density_percent, pppm, precision_recall_f1, psmbpp, topk_coverage
from .objective import ObjectiveParams, objective_G, objective_gradient
from .oracle import global_oracle, restricted_solve
from .solver import solve, stationarity_residual

__all__ = [
    "ArmijoParams", "BudgetOTError", "BudgetSpec", "CostMatrix", "InfeasibleInstance", "Marginals",
    "SolverConfig", "SolverReport", "TransportPlan", "validate_instance", "PrioritySpec",
    "build_prioritized_marginals", "check_theorem1", "northwest_init", "density_percent", "pppm",
    "precision_recall_f1", "psmbpp", "topk_coverage", "ObjectiveParams", "objective_G",
    "objective_gradient", "global_oracle", "restricted_solve", "solve", "stationarity_residual",
]

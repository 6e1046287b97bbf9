"""Regularized transport objective, the penalty function and their gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionMismatch, QOutOfRange, InvalidConfig, as_array


@dataclass(frozen=True)
class ObjectiveParams:
    gamma: float
    q: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidConfig("gamma must be non-negative")
        _check_q(self.q)

    @classmethod
    def from_config(cls, cfg) -> "ObjectiveParams":
        return cls(cfg.gamma, cfg.q)


def _check_q(q: float) -> None:
    if not 0 <= q < 1:
        raise QOutOfRange(f"q={q} outside [0, 1)")


def _same_shape(*arrays) -> None:
    if len({x.shape for x in arrays}) != 1:
        raise DimensionMismatch("shape mismatch: " + ", ".join(str(x.shape) for x in arrays))


def _pow(t: np.ndarray, p: float) -> np.ndarray:
    # 0**p is taken as 0 for the exponents used here (p > 0)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = t[pos] ** p
    return out


def linear_cost(C, T) -> float:
    C, T = as_array(C), as_array(T)
    _same_shape(C, T)
    return float(np.sum(C * T))


def deformed_q_entropy(T, q: float) -> float:
    r"""Deformed q-entropy of a non-negative matrix.

    .. math::

        H_q(T) = -\frac{1}{2-q}\sum_{ij}\Big(\frac{T_{ij}^{2-q}-T_{ij}}{1-q}-T_{ij}\Big)

    At ``q = 0`` this is ``sum(T - T**2 / 2)``.
    """
    _check_q(q)
    T = as_array(T)
    return float(-np.sum((_pow(T, 2.0 - q) - T) / (1.0 - q) - T) / (2.0 - q))


def entropy_gradient(T, q: float) -> np.ndarray:
    """Elementwise derivative ``(1 - T**(1-q)) / (1-q)``; equals ``1/(1-q)`` at zero."""
    _check_q(q)
    T = as_array(T)
    return (1.0 - _pow(T, 1.0 - q)) / (1.0 - q)


def objective_G(C, T, p: ObjectiveParams) -> float:
    return linear_cost(C, T) - p.gamma * deformed_q_entropy(T, p.q)


def objective_gradient(C, T, p: ObjectiveParams) -> np.ndarray:
    C, T = as_array(C), as_array(T)
    _same_shape(C, T)
    return C - p.gamma * entropy_gradient(T, p.q)


def penalty_terms(state) -> float:
    """Sum of squared Frobenius distances from T to U, V and W."""
    T = state.T
    return float(np.sum((T - state.U) ** 2) + np.sum((T - state.V) ** 2) + np.sum((T - state.W) ** 2))


def penalty_J(C, state, p: ObjectiveParams, sigma: float) -> float:
    if sigma < 0:
        raise InvalidConfig("sigma must be non-negative")
    _same_shape(as_array(C), state.T, state.U, state.V, state.W)
    return objective_G(C, state.T, p) + 0.5 * sigma * penalty_terms(state)


def penalty_gradient_T(C, state, p: ObjectiveParams, sigma: float) -> np.ndarray:
    """Partial gradient of the penalty function with respect to T."""
    _same_shape(as_array(C), state.T, state.U, state.V, state.W)
    T = state.T
    return objective_gradient(C, T, p) + sigma * (3.0 * T - state.U - state.V - state.W)

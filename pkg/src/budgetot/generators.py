"""Synthetic instances: two-Gaussian point clouds, prioritized task
assignment and preference ranks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import BudgetSpec, InvalidConfig, Marginals
from .feasibility import build_prioritized_marginals


@dataclass
class Instance:
    cost: np.ndarray
    marginals: Marginals
    budget: Optional[BudgetSpec] = None
    prioritized: list = field(default_factory=list)
    ranks: Optional[np.ndarray] = None
    points: Optional[tuple] = None
    meta: dict = field(default_factory=dict)


def _rng(seed: int) -> np.random.Generator:
    if seed is None or int(seed) < 0:
        raise InvalidConfig("a non-negative seed is required")
    return np.random.default_rng(int(seed))


def two_gaussian_cloud(rng: np.random.Generator, size: int, shift: float = 2.0) -> np.ndarray:
    """Samples from 0.5 N(0, I) + 0.5 N((shift, shift), I) in the plane."""
    second = rng.random(size) < 0.5
    return rng.standard_normal((size, 2)) + np.where(second[:, None], shift, 0.0)


def sq_euclidean(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1)


def gaussian2(m: int = 30, n: int = 30, seed: int = 0, normalize: bool = True) -> Instance:
    """Two point clouds from the same Gaussian mixture, uniform marginals.

    The cost is the squared Euclidean distance, divided by its maximum when
    ``normalize`` is set so entries lie in [0, 1].
    """
    rng = _rng(seed)
    X = two_gaussian_cloud(rng, m)
    Y = two_gaussian_cloud(rng, n)
    C = sq_euclidean(X, Y)
    if normalize and C.max() > 0:
        C = C / C.max()
    meta = {"generator": "gaussian2", "m": m, "n": n, "seed": int(seed), "normalize": bool(normalize)}
    return Instance(C, Marginals.uniform(m, n), points=(X, Y), meta=meta)


def prioritized_count(m: int, r: float) -> int:
    # round half to even, as Python's round; r*m = 3.2 gives 3
    return int(round(r * m))


def tasks(n: int = 32, m: Optional[int] = None, rho_s: int = 9, rho_t: int = 5, r: float = 0.1, h: int = 8,
          seed: int = 0) -> Instance:
    """Uniform [0, 1] costs with a random set of prioritized rows.

    ``round(r*m)`` rows are drawn without replacement and given row mass
    ``h/n``; the other rows share the rest evenly and ``b`` is uniform.
    """
    m = n if m is None else m
    if not 0 <= r < 1:
        raise InvalidConfig("r must lie in [0, 1)")
    rng = _rng(seed)
    C = rng.random((m, n))
    k = prioritized_count(m, r)
    prio = sorted(int(i) for i in rng.choice(m, size=k, replace=False))
    budget = BudgetSpec(rho_s, rho_t)
    ab = build_prioritized_marginals(m, n, prio, h, budget)
    meta = {"generator": "tasks", "m": m, "n": n, "seed": int(seed), "rho_s": rho_s, "rho_t": rho_t,
            "r": r, "h": h, "prioritized": prio}
    return Instance(C, ab, budget, prioritized=prio, meta=meta)


def rank_cost(ranks) -> np.ndarray:
    """Preference rank ``k`` (1 = favourite) to cost ``1 - 1/k``."""
    R = np.asarray(ranks)
    if np.any(R < 1):
        raise InvalidConfig("ranks start at 1")
    return 1.0 - 1.0 / R


def ranks(m: int = 5, n: int = 4, seed: int = 0) -> Instance:
    """Each row ranks all columns by a random permutation; uniform marginals."""
    rng = _rng(seed)
    R = np.array([rng.permutation(n) + 1 for _ in range(m)], dtype=np.int64)
    meta = {"generator": "ranks", "m": m, "n": n, "seed": int(seed)}
    return Instance(rank_cost(R), Marginals.uniform(m, n), ranks=R, meta=meta)


GENERATORS = {"gaussian2": gaussian2, "tasks": tasks, "ranks": ranks}

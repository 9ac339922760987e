"""Exact Shapley scores by full subset enumeration.

The set function ``f`` takes a boolean mask of present features. Two estimators are
offered: the standard Shapley value (marginal contributions, weighted by coalition
size) and the attribution formula that compares every coalition against the full
feature set instead of against the coalition extended by feature ``i``.
"""

from __future__ import annotations

from math import comb, factorial
from typing import Callable

import numpy as np

MAX_FEATURES = 20

SetFunction = Callable[[np.ndarray], float]


def _all_values(f: SetFunction, n: int) -> tuple[np.ndarray, np.ndarray]:
    """f on every subset indexed by bitmask (bit i set = feature i present), plus the masks."""
    masks = np.arange(1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    return np.array([float(f(bits[s])) for s in range(1 << n)]), bits


def shapley_scores(f: SetFunction, n_features: int = 9, variant: str = "standard") -> np.ndarray:
    if n_features > MAX_FEATURES:
        raise ValueError(f"exact enumeration over {n_features} features refused (limit {MAX_FEATURES})")
    if n_features < 1:
        raise ValueError("need at least one feature")
    n = n_features
    values, bits = _all_values(f, n)
    sizes = bits.sum(axis=1)
    scores = np.zeros(n)
    if variant == "standard":
        weight = np.array([factorial(k) * factorial(n - k - 1) / factorial(n) for k in range(n)])
        for i in range(n):
            without = ~bits[:, i]
            idx = np.flatnonzero(without)
            scores[i] = np.sum(weight[sizes[idx]] * (values[idx | (1 << i)] - values[idx]))
        return scores
    if variant == "as-printed":
        full = values[-1]
        norm = 1.0 / factorial(n - 1)
        for i in range(n):
            # coalitions of size 1..n-1 drawn from the other n-1 features
            idx = np.flatnonzero(~bits[:, i] & (sizes >= 1))
            w = np.array([1.0 / comb(n - 1, int(k)) for k in sizes[idx]])
            scores[i] = norm * np.sum(w * (full - values[idx]))
        return scores
    raise ValueError(f"unknown Shapley variant {variant!r}")


def masked_evaluator(model: Callable[[np.ndarray], float], x: np.ndarray, baseline: np.ndarray) -> SetFunction:
    """Set function that imputes absent features with ``baseline`` before calling ``model``."""
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)

    def f(mask: np.ndarray) -> float:
        return float(model(np.where(mask, x, baseline)))

    return f

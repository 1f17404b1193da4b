"""Motion-guided spatial sparsification of search tokens.

A small MLP turns motion tokens into per-position scores in (0, 1). The
population variance of the score map, normalised by its maximum possible
value 0.25, sets how many search tokens survive: a flat score map keeps
everything, a peaked one keeps as few as ``k_min``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import relu, sigmoid

DECAYS = ("exp", "linear", "power")
MAX_VARIANCE = 0.25


@dataclass(frozen=True)
class MgssWeights:
    w1: np.ndarray  # [C, C/2]
    b1: np.ndarray
    w2: np.ndarray  # [C/2, 1]
    b2: np.ndarray


@dataclass(frozen=True)
class SparsePlan:
    k: int
    indices: np.ndarray  # ascending
    variance: float
    variance_norm: float


def score_estimate(dx: np.ndarray, w: MgssWeights) -> np.ndarray:
    h = relu(np.asarray(dx, dtype=np.float64) @ w.w1 + w.b1)
    return sigmoid(h @ w.w2 + w.b2)[:, 0]


def score_variance(scores: np.ndarray) -> tuple[float, float]:
    """Population variance and its clamp to [0, 1] after dividing by 0.25."""
    var = float(np.var(np.asarray(scores, dtype=np.float64)))
    return var, min(var / MAX_VARIANCE, 1.0)


def k_from_variance(x: float, k_min: int, k_max: int, beta: int = 2, decay: str = "exp") -> int:
    if not 1 <= k_min <= k_max:
        raise ParameterError(f"need 1 <= k_min <= k_max, got {k_min}, {k_max}")
    if int(beta) != beta or beta < 1:
        raise ParameterError(f"beta must be a positive integer, got {beta}")
    span = k_max - k_min
    if decay == "exp":
        k = k_min + span * math.exp(-beta * x)
    elif decay == "linear":
        k = k_max + span * (-beta * x)
    elif decay == "power":
        k = k_min + span * (1.0 + x) ** (-beta)
    else:
        raise ParameterError(f"unknown decay {decay!r}")
    return min(max(math.floor(k + 0.5), k_min), k_max)


def adaptive_k(scores: np.ndarray, k_min: int, k_max: int, beta: int = 2, decay: str = "exp") -> tuple[int, float, float]:
    """Returns ``(k, variance, variance_norm)``."""
    var, x = score_variance(scores)
    return k_from_variance(x, k_min, k_max, beta, decay), var, x


def topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores (lower index wins ties), ascending."""
    scores = np.asarray(scores)
    if not 1 <= k <= scores.shape[0]:
        raise ParameterError(f"k must lie in [1, {scores.shape[0]}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


def topk_select(tokens: np.ndarray, scores: np.ndarray, k: int, variance: float = 0.0, variance_norm: float = 0.0):
    tokens = np.asarray(tokens)
    if tokens.shape[0] != np.shape(scores)[0]:
        raise ShapeError(f"{tokens.shape[0]} tokens but {np.shape(scores)[0]} scores")
    idx = topk_indices(scores, k)
    return tokens[idx], SparsePlan(k, idx, variance, variance_norm)


def random_drop(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Baseline: ``k`` distinct indices drawn uniformly, ascending."""
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    return np.sort(rng.choice(n, size=k, replace=False))


def fuse_and_scatter(rgb_sel: np.ndarray, evt_tokens: np.ndarray, scores: np.ndarray, plan: SparsePlan) -> np.ndarray:
    """Add score-weighted event tokens to the kept RGB tokens and zero-fill the rest."""
    idx = np.asarray(plan.indices)
    n = evt_tokens.shape[0]
    if rgb_sel.shape[0] != plan.k or idx.shape[0] != plan.k:
        raise ShapeError(f"plan keeps {plan.k} tokens, got {rgb_sel.shape[0]} rows and {idx.shape[0]} indices")
    if idx.size and (idx.min() < 0 or idx.max() >= n or np.unique(idx).size != idx.size):
        raise ShapeError("plan indices are out of range or repeated")
    evt_sel = evt_tokens[idx] * np.asarray(scores)[idx][:, None]
    out = np.zeros((n, rgb_sel.shape[1]), dtype=np.float64)
    out[idx] = rgb_sel + evt_sel
    return out

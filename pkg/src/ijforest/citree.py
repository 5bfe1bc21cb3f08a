"""Conditional-inference regression trees.

Variables are chosen by the asymptotic p-value of a permutation linear
statistic, and the split point by maximising the standardized two-sample
statistic on the chosen variable. Responses enter only through those
statistics and the leaf means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _kernels as K
from .cart import (
    DEFAULT_MIN_NODE_SIZE,
    TreeModel,
    _as_weights,
    _check_params,
    _sorted_active,
    draw_node_uniforms,
    grow,
)
from .data import Dataset
from .resampling import ResampleCounts

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class LinearStatistic:
    """``t = sum(w*g*h)`` with its permutation-null mean and variance."""

    t: float
    mu: float
    sigma2: float
    c: float
    p_value: float


def _weights(w, n: int) -> np.ndarray:
    if isinstance(w, ResampleCounts):
        w = w.counts
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError("weights must be a non-negative vector matching g and h")
    return w


def linear_statistic(g, h, w) -> LinearStatistic:
    """Permutation linear statistic of regressor ``g`` against labels ``h``.

    Under random rearrangement of ``h`` among the weighted observations the
    statistic has mean ``E(h) * sum(w*g)`` and variance
    ``W/(W-1) * V(h) * sum(w*g**2) - 1/(W-1) * V(h) * sum(w*g)**2``.
    The p-value is the two-sided normal tail at the standardized value.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != h.shape or g.ndim != 1:
        raise ValueError("g and h must be 1-D arrays of equal length")
    w = _weights(w, g.size)
    W = float(w.sum())
    if W < 2:
        raise ValueError(f"total weight must be >= 2, got {W}")
    act = w > 0
    if np.count_nonzero(act) < 2:
        raise ValueError("need at least two observations with positive weight")
    ga, ha, wa = g[act], h[act], w[act]
    eh = float(np.dot(wa, ha) / W)
    sg = float(np.dot(wa, ga))
    t = float(np.dot(wa, ga * ha))
    mu = eh * sg
    if ha.min() == ha.max():
        vh = 0.0
    else:
        vh = float(np.dot(wa, (ha - eh) ** 2) / W)
    sigma2 = W / (W - 1.0) * vh * float(np.dot(wa, ga * ga)) - vh * sg * sg / (W - 1.0)
    sigma2 = max(sigma2, 0.0)
    c = float(K.association(ga, ha - eh, wa, W, vh)) if vh > 0 else 0.0
    return LinearStatistic(t, mu, sigma2, c, float(K.normal_two_sided(c)))


def select_variable(data: Dataset, w, candidates: Iterable[int],
                    alpha: float = DEFAULT_ALPHA) -> Optional[tuple[int, float]]:
    """Most response-associated candidate, if it survives a Bonferroni test.

    Returns ``(variable, p_value)`` for the candidate with the smallest
    p-value (ties go to the smaller index) provided
    ``min(1, p * len(candidates)) <= alpha``; otherwise ``None``.
    """
    cands = sorted(set(int(j) for j in candidates))
    if not cands:
        raise ValueError("candidates must be non-empty")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if any(not 0 <= j < data.p for j in cands):
        raise ValueError("candidate index out of range")
    ww = _weights(w, data.n)
    act = ww > 0
    wa = ww[act]
    ya = data.response[act]
    W = float(wa.sum())
    if W < 2:
        raise ValueError("total weight must be >= 2")
    eh = float(np.dot(wa, ya) / W)
    hc = ya - eh
    vh = 0.0 if ya.min() == ya.max() else float(np.dot(wa, hc * hc) / W)
    best_j, best_c = -1, -1.0
    for j in cands:
        c = K.association(np.ascontiguousarray(data.columns[j][act]), hc, wa, W, vh)
        if best_j < 0 or K._improves(c, best_c):
            best_j, best_c = j, c
    p = float(K.normal_two_sided(best_c))
    if best_c <= 0 or min(1.0, p * len(cands)) > alpha:
        return None
    return best_j, p


def best_split_ci(x, y, w) -> Optional[float]:
    """Cut on ``x`` maximising the standardized statistic of ``1{x <= cut}`` vs ``y``."""
    counts = w.counts if isinstance(w, ResampleCounts) else w
    xs, ys, ws = _sorted_active(x, y, counts)
    if xs.size < 2 or xs[0] == xs[-1]:
        return None
    W = float(ws.sum())
    if W < 2:
        return None
    eh = float(np.dot(ws, ys) / W)
    hc = ys - eh
    vh = 0.0 if ys.min() == ys.max() else float(np.dot(ws, hc * hc) / W)
    i, _ = K.ci_scan(xs, hc, ws, W, vh)
    if i < 0:
        return None
    return float(K.safe_midpoint(xs[i], xs[i + 1]))


def fit_citree(data: Dataset, w: ResampleCounts | np.ndarray, mtry: int,
               min_node_size: int = DEFAULT_MIN_NODE_SIZE, alpha: float = DEFAULT_ALPHA,
               rng: Optional[np.random.Generator] = None) -> TreeModel:
    _check_params(data.p, mtry, min_node_size)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    counts = _as_weights(w, data.n)
    if counts.sum() < 2:
        raise ValueError("need total weight >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    u = draw_node_uniforms(rng, int(np.count_nonzero(counts)), data.p, mtry)
    return grow(data, counts, mtry, min_node_size, "ci", float(alpha), u)

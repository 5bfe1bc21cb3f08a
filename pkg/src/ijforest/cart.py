"""CART regression trees: weighted SSE split search over a random variable subset."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .data import Dataset, SplitRule
from .resampling import ResampleCounts

LEARNERS = ("cart", "ci")
DEFAULT_MIN_NODE_SIZE = 5


@dataclass(frozen=True)
class Leaf:
    prediction: float


@dataclass(frozen=True)
class Internal:
    rule: SplitRule
    left: "Leaf | Internal"
    right: "Leaf | Internal"


@dataclass(frozen=True, eq=False)
class TreeModel:
    """A fitted binary regression tree stored as preorder node arrays.

    ``feature[i] == -1`` marks node ``i`` as a leaf predicting ``value[i]``;
    otherwise rows with ``x[feature[i]] <= threshold[i]`` go to ``left[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    p: int
    learner: str

    def __post_init__(self) -> None:
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")
        f = np.asarray(self.feature)
        if np.any(f >= self.p):
            raise ValueError("split variable index out of range")
        internal = f >= 0
        if np.any(self.left[internal] < 0) or np.any(self.right[internal] < 0):
            raise ValueError("internal node missing a child")

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def root_rule(self) -> Optional[SplitRule]:
        if self.feature[0] < 0:
            return None
        return SplitRule(int(self.feature[0]), float(self.threshold[0]))

    @property
    def root(self) -> "Leaf | Internal":
        return self._node(0)

    def _node(self, i: int) -> "Leaf | Internal":
        if self.feature[i] < 0:
            return Leaf(float(self.value[i]))
        rule = SplitRule(int(self.feature[i]), float(self.threshold[i]))
        return Internal(rule, self._node(int(self.left[i])), self._node(int(self.right[i])))

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(int(self.left[i])), walk(int(self.right[i])))

        return walk(0)

    def splits(self) -> Iterator[SplitRule]:
        for i in np.flatnonzero(self.feature >= 0):
            yield SplitRule(int(self.feature[i]), float(self.threshold[i]))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty(X.shape[0], dtype=np.int64)
        for r, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[r] = node
        return out


def _as_weights(w: ResampleCounts | np.ndarray, n: int) -> np.ndarray:
    counts = w.counts if isinstance(w, ResampleCounts) else np.asarray(w)
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if counts.shape != (n,):
        raise ValueError(f"weights must have length {n}, got shape {counts.shape}")
    if np.any(counts < 0):
        raise ValueError("weights must be non-negative")
    return counts


def _sorted_active(x, y, w):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if not (x.shape == y.shape == w.shape) or x.ndim != 1:
        raise ValueError("x, y and w must be 1-D arrays of equal length")
    act = w > 0
    x, y, w = x[act], y[act], w[act]
    order = np.argsort(x, kind="mergesort")
    return x[order], y[order], w[order]


def best_split_sse(x, y, w) -> Optional[tuple[float, float]]:
    """Weighted SSE-minimising cut of one feature column.

    Candidate cuts are midpoints between consecutive distinct values among
    rows with positive weight. Returns ``(cut, sse_after)`` or ``None`` when
    the active rows hold fewer than two distinct values.
    """
    counts = w.counts if isinstance(w, ResampleCounts) else w
    xs, ys, ws = _sorted_active(x, y, counts)
    if xs.size < 2 or xs[0] == xs[-1]:
        return None
    mean = np.dot(ws, ys) / ws.sum()
    yc = ys - mean
    i, score = K.sse_scan(xs, yc, ws)
    if i < 0:
        return None
    sse_after = max(float(np.dot(ws, yc * yc) - score), 0.0)
    return float(K.safe_midpoint(xs[i], xs[i + 1])), sse_after


def _check_params(p: int, mtry: int, min_node_size: int) -> None:
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must satisfy 1 <= mtry <= p={p}, got {mtry}")
    if min_node_size < 1:
        raise ValueError(f"min_node_size must be >= 1, got {min_node_size}")


def draw_node_uniforms(rng: np.random.Generator, n_active: int, p: int, mtry: int) -> np.ndarray:
    """Uniforms for per-node variable sampling (``p`` per node, ``2*n_active - 1`` nodes max)."""
    if mtry >= p:
        return np.empty(0, dtype=np.float64)
    return rng.random((2 * n_active - 1) * p)


def grow(data: Dataset, counts: np.ndarray, mtry: int, min_node_size: int,
         learner: str, alpha: float, uniforms: np.ndarray) -> TreeModel:
    n_active = int(np.count_nonzero(counts))
    cap = max(2 * n_active - 1, 1)
    feature = np.empty(cap, np.int64)
    threshold = np.empty(cap, np.float64)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.empty(cap, np.float64)
    code = K.CART if learner == "cart" else K.CI
    size = K.grow_tree(data.columns, data.response, counts, uniforms, mtry, min_node_size,
                       code, alpha, feature, threshold, left, right, value)
    return TreeModel(feature[:size].copy(), threshold[:size].copy(), left[:size].copy(),
                     right[:size].copy(), value[:size].copy(), data.p, learner)


def fit_cart(data: Dataset, w: ResampleCounts | np.ndarray, mtry: int,
             min_node_size: int = DEFAULT_MIN_NODE_SIZE,
             rng: Optional[np.random.Generator] = None) -> TreeModel:
    """Grow a CART tree with case weights ``w``.

    A node becomes a leaf when its weighted size is below
    ``2 * min_node_size``, its responses are all equal, or no sampled
    variable offers a split that lowers the weighted SSE.
    """
    _check_params(data.p, mtry, min_node_size)
    counts = _as_weights(w, data.n)
    if counts.sum() < 2:
        raise ValueError("need total weight >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    u = draw_node_uniforms(rng, int(np.count_nonzero(counts)), data.p, mtry)
    return grow(data, counts, mtry, min_node_size, "cart", 1.0, u)


def predict_tree(tree: TreeModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.p,):
        raise ValueError(f"expected a length-{tree.p} vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return float(K.route(tree.feature, tree.threshold, tree.left, tree.right, tree.value, 0, x))

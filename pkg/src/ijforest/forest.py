"""Random forest trainer/predictor that keeps every tree's resample counts."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels as K
from .cart import DEFAULT_MIN_NODE_SIZE, LEARNERS, TreeModel, draw_node_uniforms
from .citree import DEFAULT_ALPHA
from .data import Dataset
from .resampling import (
    BOOTSTRAP,
    MODES,
    SUBSAMPLE,
    ResampleCounts,
    bootstrap_counts,
    default_subsample_size,
    subsample_counts,
    tree_rng,
)

FORMAT_NAME = "ijforest-model"
FORMAT_VERSION = 1


def default_mtry(p: int, level: int) -> int:
    """Candidate-variable count for the three standard levels.

    Level 3 normally means all ``p`` variables; with ``p == 10`` it returns 9
    so the forest does not collapse to plain bagging.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if level == 1:
        return max(p // 3, 1)
    if level == 2:
        return max((2 * p) // 3, 1)
    if level == 3:
        return 9 if p == 10 else max(p, 1)
    raise ValueError(f"mtry level must be 1, 2 or 3, got {level}")


def default_tree_count(n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return 5 * n


@dataclass(frozen=True)
class ForestConfig:
    tree_type: str = "cart"
    resample: str = BOOTSTRAP
    B: int = 500
    s: Optional[int] = None
    mtry: int = 1
    min_node_size: int = DEFAULT_MIN_NODE_SIZE
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def validate(self, n: int, p: int) -> "ForestConfig":
        """Check against data of shape ``(n, p)``; returns the config with ``s`` resolved."""
        if self.tree_type not in LEARNERS:
            raise ValueError(f"tree_type must be one of {LEARNERS}, got {self.tree_type!r}")
        if self.resample not in MODES:
            raise ValueError(f"resample must be one of {MODES}, got {self.resample!r}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not 1 <= self.mtry <= p:
            raise ValueError(f"mtry must satisfy 1 <= mtry <= p={p}, got {self.mtry}")
        if self.min_node_size < 1:
            raise ValueError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.tree_type == "ci" and not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.resample == BOOTSTRAP:
            if self.s is not None and self.s != n:
                raise ValueError(f"s applies to subsampling only (bootstrap always draws n={n})")
            return replace(self, s=n)
        s = default_subsample_size(n) if self.s is None else self.s
        if not 1 <= s <= n:
            raise ValueError(f"subsample size s must satisfy 1 <= s <= n={n}, got {s}")
        return replace(self, s=s)


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Fitted trees in flat preorder arrays plus the ``(B, n)`` count matrix.

    Tree ``b`` occupies node slots ``offsets[b]:offsets[b+1]``; child ids
    are local to the tree.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    counts: np.ndarray
    config: ForestConfig
    n: int
    p: int
    column_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        B = self.offsets.shape[0] - 1
        if self.counts.shape != (B, self.n):
            raise ValueError(f"count matrix shape {self.counts.shape} != ({B}, {self.n})")
        sums = self.counts.sum(axis=1)
        if self.config.resample == BOOTSTRAP:
            if np.any(sums != self.n):
                raise ValueError("bootstrap count rows must sum to n")
        elif np.any(sums != self.config.s) or self.counts.max(initial=0) > 1:
            raise ValueError("subsample count rows must be 0/1 summing to s")
        for arr in (self.feature, self.threshold, self.left, self.right, self.value,
                    self.offsets, self.counts):
            arr.setflags(write=False)

    @property
    def B(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def s(self) -> int:
        return int(self.config.s)

    def tree(self, b: int) -> TreeModel:
        lo, hi = int(self.offsets[b]), int(self.offsets[b + 1])
        return TreeModel(self.feature[lo:hi], self.threshold[lo:hi], self.left[lo:hi],
                         self.right[lo:hi], self.value[lo:hi], self.p, self.config.tree_type)

    @property
    def trees(self) -> list[TreeModel]:
        return [self.tree(b) for b in range(self.B)]

    def resample_counts(self, b: int) -> ResampleCounts:
        return ResampleCounts(self.counts[b], self.config.resample, self.s)

    def per_tree_matrix(self, X) -> np.ndarray:
        """Per-tree predictions for every row of ``X``, shape ``(k, B)``."""
        X = _check_rows(X, self.p)
        return K.predict_matrix(self.feature, self.threshold, self.left, self.right,
                                self.value, self.offsets, X)


def _check_rows(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected rows of width {p}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("prediction inputs must be finite")
    return np.ascontiguousarray(X)


def _draw(config: ForestConfig, n: int, p: int, b: int):
    rng = tree_rng(config.seed, b)
    if config.resample == BOOTSTRAP:
        rc = bootstrap_counts(n, rng)
    else:
        rc = subsample_counts(n, int(config.s), rng)
    u = draw_node_uniforms(rng, int(np.count_nonzero(rc.counts)), p, config.mtry)
    return rc.counts, u


def _grow_block(data: Dataset, config: ForestConfig, lo: int, hi: int):
    n, p = data.n, data.p
    draws = [_draw(config, n, p, b) for b in range(lo, hi)]
    counts = np.stack([c for c, _ in draws]).astype(np.int64)
    sizes_u = np.array([u.size for _, u in draws], dtype=np.int64)
    ubuf_off = np.concatenate(([0], np.cumsum(sizes_u))).astype(np.int64)
    ubuf = np.concatenate([u for _, u in draws]) if sizes_u.sum() else np.empty(0)
    cap = int(max(2 * np.count_nonzero(counts, axis=1).max() - 1, 1))
    nb = hi - lo
    feature = np.empty((nb, cap), np.int64)
    threshold = np.empty((nb, cap), np.float64)
    left = np.empty((nb, cap), np.int64)
    right = np.empty((nb, cap), np.int64)
    value = np.empty((nb, cap), np.float64)
    sizes = np.empty(nb, np.int64)
    code = K.CART if config.tree_type == "cart" else K.CI
    K.grow_many(data.columns, data.response, counts, ubuf, ubuf_off, config.mtry,
                config.min_node_size, code, float(config.alpha),
                feature, threshold, left, right, value, sizes)
    return counts, sizes, feature, threshold, left, right, value


def fit_forest(data: Dataset, config: ForestConfig, threads: int = 1) -> ForestModel:
    """Grow ``config.B`` trees, each on its own resample.

    Tree ``b`` draws its resample and variable-sampling uniforms from a
    stream keyed by ``(config.seed, b)``, so the result does not depend on
    ``threads``.
    """
    config = config.validate(data.n, data.p)
    B = config.B
    threads = max(1, int(threads))
    n_blocks = min(B, threads * 4) if threads > 1 else 1
    bounds = np.linspace(0, B, n_blocks + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if threads == 1:
        blocks = [_grow_block(data, config, a, b) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(lambda ab: _grow_block(data, config, *ab), spans))

    counts = np.concatenate([blk[0] for blk in blocks])
    sizes = np.concatenate([blk[1] for blk in blocks])
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    parts = [[] for _ in range(5)]
    for blk in blocks:
        bs = blk[1]
        for k in range(5):
            arr = blk[2 + k]
            parts[k].extend(arr[i, :bs[i]] for i in range(bs.shape[0]))
    feature, threshold, left, right, value = (np.concatenate(p) for p in parts)
    return ForestModel(feature, threshold, left, right, value, offsets, counts,
                       config, data.n, data.p, data.column_names)


def predict_per_tree(forest: ForestModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.p,):
        raise ValueError(f"expected a length-{forest.p} vector, got shape {x.shape}")
    return forest.per_tree_matrix(x)[0]


def predict(forest: ForestModel, x) -> float:
    """Average of the per-tree predictions at ``x``."""
    return float(K.row_means(forest.per_tree_matrix(_single(x, forest.p)))[0])


def predict_batch(forest: ForestModel, X) -> np.ndarray:
    return K.row_means(forest.per_tree_matrix(X))


def _single(x, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p,):
        raise ValueError(f"expected a length-{p} vector, got shape {x.shape}")
    return x


def _float_list(a: np.ndarray) -> list[float]:
    return [float(v) for v in a]


def save_forest(forest: ForestModel, path: str | Path) -> None:
    """Write the model as versioned JSON: header, then one record per tree.

    Each tree record holds its preorder node list ``[feature, threshold,
    left, right, value]`` and its count vector. Floats are written with
    ``repr`` so reloading reproduces predictions bit for bit.
    """
    trees = []
    for b in range(forest.B):
        lo, hi = int(forest.offsets[b]), int(forest.offsets[b + 1])
        nodes = [
            [int(forest.feature[i]), float(forest.threshold[i]), int(forest.left[i]),
             int(forest.right[i]), float(forest.value[i])]
            for i in range(lo, hi)
        ]
        trees.append({"nodes": nodes, "counts": [int(c) for c in forest.counts[b]]})
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": asdict(forest.config),
        "n": forest.n,
        "p": forest.p,
        "B": forest.B,
        "column_names": list(forest.column_names) if forest.column_names else None,
        "trees": trees,
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def load_forest(path: str | Path) -> ForestModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not an {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    config = ForestConfig(**doc["config"])
    trees = doc["trees"]
    if len(trees) != doc["B"]:
        raise ValueError(f"{path}: header says B={doc['B']} but {len(trees)} trees stored")
    nodes = [nd for t in trees for nd in t["nodes"]]
    sizes = [len(t["nodes"]) for t in trees]
    feature = np.array([nd[0] for nd in nodes], dtype=np.int64)
    threshold = np.array([nd[1] for nd in nodes], dtype=np.float64)
    left = np.array([nd[2] for nd in nodes], dtype=np.int64)
    right = np.array([nd[3] for nd in nodes], dtype=np.int64)
    value = np.array([nd[4] for nd in nodes], dtype=np.float64)
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    counts = np.array([t["counts"] for t in trees], dtype=np.int64).reshape(len(trees), doc["n"])
    names = doc.get("column_names")
    return ForestModel(feature, threshold, left, right, value, offsets, counts,
                       config, int(doc["n"]), int(doc["p"]), tuple(names) if names else None)

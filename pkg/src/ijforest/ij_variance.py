"""Prediction-variance estimates for random forests.

The infinitesimal jackknife (IJ) estimate sums the squared covariances
between each observation's resample count and the tree predictions,
minus a Monte Carlo bias term that removes the inflation caused by using
finitely many trees. The jackknife-after-bootstrap estimate is kept
alongside for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .forest import ForestModel, _check_rows
from .resampling import BOOTSTRAP

BIAS_CORRECTIONS = ("eq5", "bootstrap", "none")


@dataclass(frozen=True)
class VarianceEstimate:
    raw: float
    correction: float
    corrected: float
    B: int
    estimator: str = "ij"


@dataclass(frozen=True)
class BatchVariance:
    """Array form of :class:`VarianceEstimate` for ``k`` prediction points."""

    prediction: np.ndarray
    raw: np.ndarray
    correction: np.ndarray
    corrected: np.ndarray
    B: int

    def __len__(self) -> int:
        return self.prediction.shape[0]

    def records(self) -> list[tuple[float, VarianceEstimate]]:
        return [
            (float(self.prediction[i]),
             VarianceEstimate(float(self.raw[i]), float(self.correction[i]),
                              float(self.corrected[i]), self.B))
            for i in range(len(self))
        ]


def default_bias_correction(forest: ForestModel) -> str:
    return "bootstrap" if forest.config.resample == BOOTSTRAP else "eq5"


def correction_factor(forest: ForestModel, bias_correction: Optional[str] = None) -> float:
    """Multiplier ``m`` such that the bias term is ``m * v_hat / B``.

    ``eq5`` uses ``s(n - s)/n`` (zero for a full-size bootstrap),
    ``bootstrap`` uses ``n``, ``none`` disables the correction.
    ``None`` picks ``bootstrap`` for bootstrap forests and ``eq5`` otherwise.
    """
    mode = bias_correction or default_bias_correction(forest)
    n, s = forest.n, forest.s
    if mode == "eq5":
        return s * (n - s) / n
    if mode == "bootstrap":
        return float(n)
    if mode == "none":
        return 0.0
    raise ValueError(f"bias_correction must be one of {BIAS_CORRECTIONS}, got {mode!r}")


def ij_from_tree_predictions(T: np.ndarray, counts: np.ndarray, s: int,
                             factor: float, floor: bool = False) -> BatchVariance:
    """IJ estimates from a ``(k, B)`` per-tree prediction matrix and ``(B, n)`` counts."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    counts = np.asarray(counts)
    B, n = counts.shape
    if B < 2:
        raise ValueError("the IJ estimate needs at least 2 trees")
    if T.ndim != 2 or T.shape[1] != B:
        raise ValueError(f"tree prediction matrix must have {B} columns, got shape {T.shape}")
    counts_t = np.ascontiguousarray(counts.T, dtype=np.float64)
    raw, vhat, mean = K.ij_accumulate(T, counts_t, s / n)
    correction = factor * vhat / B
    corrected = raw - correction
    if floor:
        corrected = np.maximum(corrected, 0.0)
    return BatchVariance(mean, raw, correction, corrected, B)


def predict_with_variance(forest: ForestModel, X_test, bias_correction: Optional[str] = None,
                          floor: bool = False) -> BatchVariance:
    """Forest predictions and IJ variance for every row of ``X_test``.

    One pass over the per-tree predictions feeds both the ensemble mean and
    the variance estimate. ``floor`` clips negative corrected values at 0.
    """
    if forest.counts is None or forest.counts.size == 0:
        raise ValueError("forest carries no resample counts")
    X = np.asarray(X_test, dtype=np.float64)
    if X.ndim == 2 and X.shape[0] == 0:
        if X.shape[1] != forest.p:
            raise ValueError(f"expected rows of width {forest.p}, got shape {X.shape}")
        empty = np.empty(0)
        return BatchVariance(empty, empty, empty, empty, forest.B)
    X = _check_rows(X, forest.p)
    T = forest.per_tree_matrix(X)
    return ij_from_tree_predictions(T, forest.counts, forest.s,
                                    correction_factor(forest, bias_correction), floor)


def ij_variance(forest: ForestModel, x, bias_correction: Optional[str] = None,
                floor: bool = False) -> VarianceEstimate:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.p,):
        raise ValueError(f"expected a length-{forest.p} vector, got shape {x.shape}")
    return predict_with_variance(forest, x[None, :], bias_correction, floor).records()[0][1]


def jackknife_after_bootstrap(forest: ForestModel, x) -> VarianceEstimate:
    """Leave-one-out variance using, for each observation, the trees that never saw it."""
    if forest.config.resample != BOOTSTRAP:
        raise ValueError("jackknife-after-bootstrap needs a bootstrap forest")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.p,):
        raise ValueError(f"expected a length-{forest.p} vector, got shape {x.shape}")
    T = forest.per_tree_matrix(x)[0]
    out = forest.counts == 0
    n_out = out.sum(axis=0)
    if np.any(n_out == 0):
        i = int(np.flatnonzero(n_out == 0)[0])
        raise ValueError(f"observation {i} appears in every resample")
    loo = (T @ out) / n_out
    n = forest.n
    centred = loo - loo.mean()
    v = (n - 1) / n * float(np.dot(centred, centred))
    return VarianceEstimate(v, 0.0, v, forest.B, "jackknife_after_bootstrap")

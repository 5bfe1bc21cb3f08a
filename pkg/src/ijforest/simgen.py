"""Synthetic predictors and the eleven outcome functions of the simulation study.

X1..X5 are standard normal; X6..X10 are normal with mean 10 and variance 5
by default. Their standard deviation is a parameter (``wide_sd``): reference
empirical variances for SUM5 and SQ5 are only reproduced with sd 5.
Outcomes are noiseless functions of the predictors. The formulas are kept
verbatim, including SQ5 (four squared terms) and AND5 (four indicators
divided by 5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset

P = 10
COLUMN_NAMES = tuple(f"x{j}" for j in range(1, P + 1))
WIDE_SD = math.sqrt(5.0)


def _ind(cond) -> np.ndarray:
    return np.asarray(cond, dtype=np.float64)


# Columns are 0-based: X1 is x[..., 0].
FUNCTIONS = {
    "SUM1": lambda x: x[..., 0],
    "SUM3": lambda x: x[..., 0] + x[..., 2] + x[..., 4],
    "SUM5": lambda x: x[..., 0] + x[..., 2] + x[..., 4] + x[..., 5] + x[..., 6],
    "SQ1": lambda x: x[..., 0] ** 2,
    "SQ3": lambda x: x[..., 0] ** 2 + x[..., 2] ** 2 + x[..., 4] ** 2,
    "SQ5": lambda x: x[..., 0] ** 2 + x[..., 2] ** 2 + x[..., 4] ** 2 + x[..., 5] ** 2,
    "OR1": lambda x: _ind(x[..., 0] > 0.4),
    "OR3": lambda x: _ind(x[..., 0] > 0.4) * _ind(x[..., 2] > 0.6) * _ind(x[..., 4] > 0.4),
    "OR5": lambda x: (_ind(x[..., 0] > 0.4) * _ind(x[..., 1] > 0.6) * _ind(x[..., 2] > 0.4)
                      * _ind(x[..., 4] > 0.4) * _ind(x[..., 5] > 6)),
    "AND3": lambda x: (_ind(x[..., 0] > 0.4) + _ind(x[..., 1] > 0.6) + _ind(x[..., 2] > 0.4)) / 3,
    "AND5": lambda x: (_ind(x[..., 0] > 0.4) + _ind(x[..., 2] > 0.6) + _ind(x[..., 4] > 0.4)
                       + _ind(x[..., 5] > 6)) / 5,
}
SPEC_NAMES = tuple(FUNCTIONS)

# 0-based columns each outcome reads; everything else is noise.
USED_COLUMNS = {
    "SUM1": (0,), "SUM3": (0, 2, 4), "SUM5": (0, 2, 4, 5, 6),
    "SQ1": (0,), "SQ3": (0, 2, 4), "SQ5": (0, 2, 4, 5),
    "OR1": (0,), "OR3": (0, 2, 4), "OR5": (0, 1, 2, 4, 5),
    "AND3": (0, 1, 2), "AND5": (0, 2, 4, 5),
}


def _check_name(name: str) -> None:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown simulation {name!r}; valid names: {', '.join(SPEC_NAMES)}")


@dataclass(frozen=True)
class SimulationSpec:
    name: str
    n: int
    seed: int = 0
    wide_sd: float = WIDE_SD

    def __post_init__(self) -> None:
        _check_name(self.name)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        _check_sd(self.wide_sd)


def _check_sd(sd: float) -> None:
    if not (math.isfinite(sd) and sd > 0):
        raise ValueError(f"wide_sd must be a positive finite number, got {sd}")


def gen_predictors(n: int, rng: np.random.Generator, wide_sd: float = WIDE_SD) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_sd(wide_sd)
    X = rng.standard_normal((n, P))
    X[:, 5:] = 10.0 + wide_sd * X[:, 5:]
    return X


def apply_function(name: str, x) -> np.ndarray | float:
    """Evaluate outcome ``name`` on one length-10 vector or on each row of a matrix."""
    _check_name(name)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != P:
        raise ValueError(f"expected {P} predictors, got {x.shape[-1]}")
    out = FUNCTIONS[name](x)
    return float(out) if x.ndim == 1 else np.asarray(out, dtype=np.float64)


def gen_dataset(spec: SimulationSpec) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    return dataset_from_rng(spec.name, spec.n, rng, spec.wide_sd)


def dataset_from_rng(name: str, n: int, rng: np.random.Generator,
                     wide_sd: float = WIDE_SD) -> Dataset:
    X = gen_predictors(n, rng, wide_sd)
    return Dataset(X, apply_function(name, X), COLUMN_NAMES, "y")

"""Bootstrap and subsample draws represented as per-observation counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOOTSTRAP = "bootstrap"
SUBSAMPLE = "subsample"
MODES = (BOOTSTRAP, SUBSAMPLE)


@dataclass(frozen=True, eq=False)
class ResampleCounts:
    """How many times each training row appears in one tree's resample."""

    counts: np.ndarray
    mode: str
    s: int

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if self.mode not in MODES:
            raise ValueError(f"unknown resample mode {self.mode!r}")
        if c.ndim != 1 or np.any(c < 0):
            raise ValueError("counts must be a 1-D vector of non-negative integers")
        total = int(c.sum())
        if self.mode == BOOTSTRAP and (self.s != c.size or total != c.size):
            raise ValueError(f"bootstrap counts must sum to n={c.size}, got {total}")
        if self.mode == SUBSAMPLE and (total != self.s or c.max(initial=0) > 1):
            raise ValueError(f"subsample counts must be 0/1 summing to s={self.s}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.counts.size


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Independent Philox stream for tree ``tree_index`` of a forest seeded with ``seed``.

    The stream depends only on the pair, so trees can be grown in any
    order or on any number of workers.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tree_index),))
    return np.random.Generator(np.random.Philox(ss))


def bootstrap_counts(n: int, rng: np.random.Generator) -> ResampleCounts:
    """Tally of ``n`` uniform draws with replacement from ``range(n)``."""
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    draws = rng.integers(0, n, size=n)
    return ResampleCounts(np.bincount(draws, minlength=n), BOOTSTRAP, n)


def subsample_counts(n: int, s: int, rng: np.random.Generator) -> ResampleCounts:
    if not 1 <= s <= n:
        raise ValueError(f"subsample size must satisfy 1 <= s <= n, got s={s}, n={n}")
    counts = np.zeros(n, dtype=np.int64)
    counts[rng.choice(n, size=s, replace=False)] = 1
    return ResampleCounts(counts, SUBSAMPLE, s)


def default_subsample_size(n: int) -> int:
    """``n ** 0.7`` rounded to nearest, ties up (41 / 126 / 388 at n = 200 / 1000 / 5000)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return int(math.floor(n**0.7 + 0.5))

import numpy as np
import pytest

from ijforest.data import Dataset
from ijforest.forest import ForestConfig, ForestModel
from ijforest.simgen import SimulationSpec, gen_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sum1_200():
    return gen_dataset(SimulationSpec("SUM1", 200, seed=11))


@pytest.fixture(scope="session")
def sum1_50():
    return gen_dataset(SimulationSpec("SUM1", 50, seed=5))


def make_dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
    return Dataset(X, np.asarray(y, dtype=float), names)


def leaf_forest(values, counts, resample="subsample", s=None):
    """Forest of single-leaf trees with the given values and count rows."""
    values = np.asarray(values, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    B, n = counts.shape
    if s is None:
        s = n if resample == "bootstrap" else int(counts[0].sum())
    cfg = ForestConfig(resample=resample, B=B, s=s, mtry=1)
    return ForestModel(np.full(B, -1, np.int64), np.zeros(B), np.full(B, -1, np.int64),
                       np.full(B, -1, np.int64), values, np.arange(B + 1, dtype=np.int64),
                       counts, cfg, n, 1)

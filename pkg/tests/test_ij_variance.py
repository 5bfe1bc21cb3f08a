import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import leaf_forest, make_dataset
from ijforest.forest import ForestConfig, fit_forest, predict
from ijforest.ij_variance import (
    correction_factor,
    ij_from_tree_predictions,
    ij_variance,
    jackknife_after_bootstrap,
    predict_with_variance,
)
from ijforest.simgen import SimulationSpec, gen_dataset


def test_hand_fixture_subsample():
    f = leaf_forest([1.0, 3.0], [[1, 0], [0, 1]], "subsample", s=1)
    v = ij_variance(f, [0.0])
    assert v.raw == pytest.approx(0.5, abs=1e-12)
    assert v.correction == pytest.approx(0.25, abs=1e-12)
    assert v.corrected == pytest.approx(0.25, abs=1e-12)


def test_hand_fixture_jackknife_after_bootstrap():
    f = leaf_forest([1.0, 3.0], [[2, 0], [0, 2]], "bootstrap")
    v = jackknife_after_bootstrap(f, [0.0])
    assert v.corrected == pytest.approx(1.0, abs=1e-12) and v.correction == 0


def test_identical_trees_give_zero():
    f = leaf_forest([2.0, 2.0, 2.0], [[2, 0, 1], [0, 1, 2], [1, 1, 1]], "bootstrap")
    v = ij_variance(f, [0.0])
    assert v.raw == 0 and v.correction == 0 and v.corrected == 0
    assert jackknife_after_bootstrap(leaf_forest([2.0, 2.0], [[2, 0], [0, 2]], "bootstrap"), [0.0]).raw == 0


def test_jackknife_after_bootstrap_errors():
    with pytest.raises(ValueError, match="observation 0"):
        jackknife_after_bootstrap(leaf_forest([1.0, 2.0], [[1, 1], [2, 0]], "bootstrap"), [0.0])
    with pytest.raises(ValueError):
        jackknife_after_bootstrap(leaf_forest([1.0, 3.0], [[1, 0], [0, 1]], "subsample", s=1), [0.0])


def test_needs_two_trees():
    with pytest.raises(ValueError):
        ij_variance(leaf_forest([1.0], [[1, 0]], "subsample", s=1), [0.0])


def _textbook(T, N):
    Tc = T - T.mean()
    Nc = N - N.mean(axis=0)
    return (Nc * Tc[:, None]).sum(axis=0) / T.size


@pytest.mark.parametrize("seed", range(10))
def test_covariance_matches_textbook_formula(seed):
    rng = np.random.default_rng(seed)
    B, n, s = 40, 12, 5
    counts = np.zeros((B, n), int)
    for b in range(B):
        counts[b, rng.choice(n, s, replace=False)] = 1
    T = rng.normal(size=B)
    C = _textbook(T, counts)
    raw_textbook = float(np.sum(C * C))
    # with e replaced by the empirical column means the one-pass formula is the textbook one
    Tc = T - T.mean()
    C_emp = ((counts - counts.mean(axis=0)) * Tc[:, None]).mean(axis=0)
    np.testing.assert_allclose(C_emp, C, rtol=1e-10, atol=1e-15)
    # balanced design: every column mean equals s/n, so e = s/n gives the same answer
    bal = np.zeros((n, n), int)
    for b in range(n):
        bal[b, [(b + j) % n for j in range(s)]] = 1
    Tb = rng.normal(size=n)
    got = ij_from_tree_predictions(Tb[None, :], bal, s, 0.0).raw[0]
    assert got == pytest.approx(float(np.sum(_textbook(Tb, bal) ** 2)), rel=1e-10)
    assert raw_textbook >= 0


def test_large_b_self_consistency():
    d = gen_dataset(SimulationSpec("SUM1", 50, seed=5))
    x = np.zeros(10)
    x[5:] = 10.0
    raw = {}
    cor = {}
    for B in (250, 5000):
        est = [ij_variance(fit_forest(d, ForestConfig(B=B, mtry=3, seed=sd)), x) for sd in range(20)]
        raw[B] = np.mean([e.raw for e in est])
        cor[B] = np.mean([e.corrected for e in est])
    assert raw[250] > raw[5000]
    assert abs(cor[250] - cor[5000]) <= 0.10 * abs(cor[5000])


@pytest.mark.parametrize("tree_type", ["cart", "ci"])
@pytest.mark.parametrize("resample", ["bootstrap", "subsample"])
def test_scale_equivariance(sum1_50, tree_type, resample):
    X = np.random.default_rng(1).normal(size=(5, 10))
    cfg = ForestConfig(tree_type=tree_type, resample=resample, B=60, mtry=6, seed=12)
    base = predict_with_variance(fit_forest(sum1_50, cfg), X)
    for a in (0.25, 3.0, 1024.0):
        scaled = predict_with_variance(fit_forest(sum1_50.with_response(a * sum1_50.response), cfg), X)
        np.testing.assert_allclose(scaled.raw, a * a * base.raw, rtol=1e-8)
        np.testing.assert_allclose(scaled.corrected, a * a * base.corrected, rtol=1e-8, atol=1e-12 * a * a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["eq5", "bootstrap", "none"]))
def test_corrected_never_exceeds_raw(seed, mode):
    rng = np.random.default_rng(seed)
    B, n = int(rng.integers(2, 30)), int(rng.integers(2, 15))
    counts = np.stack([np.bincount(rng.integers(0, n, n), minlength=n) for _ in range(B)])
    T = rng.normal(size=(3, B))
    factor = {"eq5": 0.0, "bootstrap": float(n), "none": 0.0}[mode]
    v = ij_from_tree_predictions(T, counts, n, factor)
    assert np.all(v.raw >= 0) and np.all(v.correction >= 0) and np.all(v.corrected <= v.raw)
    np.testing.assert_array_equal(v.corrected, v.raw - v.correction)


def test_full_size_subsample_has_no_correction(sum1_50):
    f = fit_forest(sum1_50, ForestConfig(resample="subsample", s=50, B=20, mtry=3, seed=1))
    v = ij_variance(f, np.zeros(10))
    assert v.correction == 0.0 and v.corrected == v.raw


def test_correction_factors(sum1_50):
    boot = fit_forest(sum1_50, ForestConfig(B=3, mtry=3))
    sub = fit_forest(sum1_50, ForestConfig(resample="subsample", s=10, B=3, mtry=3))
    assert correction_factor(boot) == 50 and correction_factor(boot, "eq5") == 0
    assert correction_factor(sub) == pytest.approx(10 * 40 / 50)
    assert correction_factor(sub, "none") == 0
    with pytest.raises(ValueError):
        correction_factor(sub, "other")


def test_floor_option():
    f = leaf_forest([1.0, 3.0, 1.0, 3.0], [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]], "subsample", s=1)
    v = ij_variance(f, [0.0], bias_correction="bootstrap")
    floored = ij_variance(f, [0.0], bias_correction="bootstrap", floor=True)
    assert v.corrected < 0 and floored.corrected == 0.0


def test_batch_equals_loop(sum1_200):
    f = fit_forest(sum1_200, ForestConfig(resample="subsample", B=200, mtry=3, seed=3))
    X = np.random.default_rng(4).normal(size=(100, 10))
    batch = predict_with_variance(f, X)
    for i, (pred, v) in enumerate(batch.records()):
        single = ij_variance(f, X[i])
        assert pred == predict(f, X[i])
        assert (v.raw, v.correction, v.corrected) == (single.raw, single.correction, single.corrected)


def test_empty_batch(sum1_50):
    f = fit_forest(sum1_50, ForestConfig(B=3, mtry=3))
    assert len(predict_with_variance(f, np.empty((0, 10)))) == 0
    with pytest.raises(ValueError):
        predict_with_variance(f, np.zeros((2, 9)))


def _jab_one_pass(T, counts):
    n = counts.shape[1]
    sums = np.zeros(n)
    num = np.zeros(n)
    for b in range(T.size):
        for i in range(n):
            if counts[b, i] == 0:
                sums[i] += T[b]
                num[i] += 1
    loo = sums / num
    return (n - 1) / n * float(((loo - loo.mean()) ** 2).sum())


def test_jackknife_after_bootstrap_matches_one_pass_oracle(rng):
    X = rng.normal(size=(30, 3))
    d = make_dataset(X, X[:, 0] + rng.normal(size=30))
    f = fit_forest(d, ForestConfig(B=500, mtry=2, seed=7))
    for x in rng.normal(size=(5, 3)):
        T = f.per_tree_matrix(x)[0]
        assert jackknife_after_bootstrap(f, x).corrected == pytest.approx(_jab_one_pass(T, f.counts), rel=1e-10)

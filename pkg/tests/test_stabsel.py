import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import expit

from stabtune.l0logreg import Dataset
from stabtune.stabsel import (
    SelectionFrequencies,
    StabSelParams,
    complementary_subsamples,
    derive_q,
    random_candidates,
    selection_frequencies,
    stable_set,
    sub_seed,
    tune_stabsel,
)
from stabtune.tuning import make_cv_splits


def dominant_feature_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    y = (rng.random(n) < expit(3.0 * x[:, 0] + x[:, 1])).astype(int)
    return Dataset(x, y)


def test_params_validation():
    with pytest.raises(ValueError):
        StabSelParams(0.5, 1.0)
    with pytest.raises(ValueError):
        StabSelParams(0.8, 0.0)
    with pytest.raises(ValueError):
        StabSelParams(0.8, 1.0, n_subsamples=7)


def test_subsamples_one_pair():
    (a, b) = complementary_subsamples(10, 2, seed=0)
    assert a.size == b.size == 5
    assert np.array_equal(np.sort(np.r_[a, b]), np.arange(10))


def test_subsamples_fifty():
    subs = complementary_subsamples(100, 50, seed=3)
    assert len(subs) == 50 and all(s.size == 50 for s in subs)
    for a, b in zip(subs[::2], subs[1::2]):
        assert np.intersect1d(a, b).size == 0
    again = complementary_subsamples(100, 50, seed=3)
    assert all(np.array_equal(s, t) for s, t in zip(subs, again))


@given(st.integers(4, 60), st.integers(1, 5), st.integers(0, 2**31))
def test_subsample_pairs_partition(n, pairs, seed):
    subs = complementary_subsamples(n, 2 * pairs, seed)
    for a, b in zip(subs[::2], subs[1::2]):
        assert a.size == n // 2 and b.size == n - n // 2
        assert np.array_equal(np.sort(np.r_[a, b]), np.arange(n))


def test_subsamples_reject_odd_and_tiny():
    with pytest.raises(ValueError):
        complementary_subsamples(10, 3)
    with pytest.raises(ValueError):
        complementary_subsamples(3, 2)


def test_derive_q_examples():
    assert derive_q(StabSelParams(0.9, 1.0), 200) == 12
    assert derive_q(StabSelParams(0.55, 1e-9), 200) == 1
    assert derive_q(StabSelParams(0.99, 1e6), 50) == 50


@given(st.floats(0.5001, 1.0), st.floats(1e-6, 1e4), st.integers(1, 5000))
def test_derive_q_bounds(cutoff, pfer, p):
    q = derive_q(StabSelParams(cutoff, pfer), p)
    assert 1 <= q <= p
    assert q == min(p, max(1, math.floor(math.sqrt(pfer * (2 * cutoff - 1) * p))))


def test_stable_set_examples():
    freqs = SelectionFrequencies(np.array([0.9, 0.6, 0.2]), 1, 10)
    assert stable_set(freqs, 0.6) == frozenset({0, 1})
    assert stable_set(SelectionFrequencies(np.zeros(4), 1, 10), 0.7) == frozenset()
    assert stable_set(SelectionFrequencies(np.array([1.0, 0.98]), 1, 50), 1.0) == frozenset({0})
    with pytest.raises(ValueError):
        stable_set(freqs, 0.5)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=20), st.floats(0.51, 1.0), st.floats(0.51, 1.0))
def test_stable_set_monotone(counts, c1, c2):
    lo, hi = sorted([c1, c2])
    freqs = SelectionFrequencies(np.array(counts) / 50, 1, 50)
    assert stable_set(freqs, hi) <= stable_set(freqs, lo)


def test_dominant_feature_frequency():
    data = dominant_feature_data(80, 1)
    params = StabSelParams(cutoff=0.6, pfer=0.5, n_subsamples=10, seed=4)
    freqs = selection_frequencies(data, params)
    assert freqs.q_used == 1
    assert freqs.freq[0] >= 0.9 and freqs.freq[1:].max() <= 0.1
    counts = freqs.freq * 10
    assert np.allclose(counts, np.round(counts))
    assert stable_set(freqs, 0.6) == frozenset({0})


def test_selection_frequencies_reproducible_and_q_check():
    data = dominant_feature_data(40, 2)
    params = StabSelParams(0.7, 1.0, 4, seed=1)
    assert np.array_equal(selection_frequencies(data, params).freq, selection_frequencies(data, params).freq)
    big = Dataset(np.random.default_rng(0).standard_normal((12, 400)), [0, 1] * 6)
    with pytest.raises(ValueError, match="too large"):
        selection_frequencies(big, StabSelParams(0.9, 5.0, 4))


def test_random_candidates_ranges():
    cands = random_candidates(200, seed=0)
    assert all(0.55 <= c.cutoff <= 0.99 and 0.1 <= c.pfer <= 10 for c in cands)
    logs = np.log10([c.pfer for c in cands])
    # log-uniform: roughly half the draws below PFER = 1
    assert 0.35 < np.mean(logs < 0) < 0.65
    assert random_candidates(3, 5) == random_candidates(3, 5)
    with pytest.raises(ValueError):
        random_candidates(0, 1)


def test_sub_seed_distinct():
    assert sub_seed(1, 2) == sub_seed(1, 2)
    assert len({sub_seed(1, i) for i in range(50)}) == 50


def test_tune_single_candidate():
    data = dominant_feature_data(60, 3)
    splits = make_cv_splits(60, 3, 0)
    params, perf = tune_stabsel(data, splits, n_points=1, seed=2, n_subsamples=4)
    assert params == random_candidates(1, 2, 4)[0]
    assert len(perf.fold_accuracies) == 3
    assert perf.k == derive_q(params, data.p)


def test_tune_reproducible():
    data = dominant_feature_data(60, 4)
    splits = make_cv_splits(60, 3, 1)
    a = tune_stabsel(data, splits, n_points=4, seed=7, n_subsamples=4)
    b = tune_stabsel(data, splits, n_points=4, seed=7, n_subsamples=4)
    assert a[0] == b[0] and a[1].fold_feature_sets == b[1].fold_feature_sets


def test_tune_picks_most_accurate():
    data = dominant_feature_data(60, 5)
    splits = make_cv_splits(60, 3, 2)
    params, perf = tune_stabsel(data, splits, n_points=5, seed=1, n_subsamples=4)
    # rerun every candidate alone; the winner's accuracy is the maximum
    accs = []
    for c in random_candidates(5, 1, 4):
        _, p = tune_stabsel(data, splits, 1, 1, n_subsamples=4, cutoff_range=(c.cutoff, c.cutoff),
                            pfer_range=(c.pfer, c.pfer))
        accs.append(p.mean_accuracy)
    assert perf.mean_accuracy == pytest.approx(max(accs))

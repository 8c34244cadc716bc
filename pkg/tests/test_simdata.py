import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabtune.simdata import (
    TEST_SEED_OFFSET,
    GroundTruth,
    ScenarioSpec,
    block_of,
    ground_truth,
    make_block_covariance,
    sample_dataset,
    sample_test_dataset,
    scenario_grid,
)


def test_covariance_p4_block2():
    sigma = make_block_covariance(ScenarioSpec(n=10, p=4, block_size=2, n_generating=2))
    expected = np.array([[1, 0.95, 0.1, 0.1], [0.95, 1, 0.1, 0.1], [0.1, 0.1, 1, 0.95], [0.1, 0.1, 0.95, 1]])
    assert np.array_equal(sigma, expected)
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_covariance_singletons():
    sigma = make_block_covariance(ScenarioSpec(n=10, p=3, block_size=1, n_generating=2))
    assert np.array_equal(sigma, np.where(np.eye(3) == 1, 1.0, 0.1))


def test_covariance_partial_block():
    spec = ScenarioSpec(n=10, p=7, block_size=3, n_generating=2, allow_partial_block=True)
    sigma = make_block_covariance(spec)
    assert spec.n_blocks == 3
    assert sigma[6, 5] == 0.1 and sigma[4, 5] == 0.95
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_non_pd_parameters_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        make_block_covariance(ScenarioSpec(n=10, p=4, block_size=2, within_corr=1.0, n_generating=2))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(p=200, block_size=15),
        dict(p=10, block_size=5, n_generating=3),
        dict(p=10, between_corr=0.5, within_corr=0.4),
        dict(p=10, block_size=0),
    ],
)
def test_spec_invariants(kwargs):
    with pytest.raises(ValueError):
        ScenarioSpec(n=10, **kwargs)


def test_spec_divisibility_message():
    with pytest.raises(ValueError, match="not divisible"):
        ScenarioSpec(p=200, block_size=7)


def test_grid_scenarios_positive_definite():
    # closed-form check against a dense eigendecomposition at p = 200
    for spec in scenario_grid(desk_scale=True):
        assert np.linalg.eigvalsh(make_block_covariance(spec)).min() > 0


def test_scenario_grid():
    full = scenario_grid()
    assert len(full) == 12
    desk = scenario_grid(desk_scale=True)
    assert [(s.p, s.block_size) for s in desk] == [(200, 1), (200, 5), (200, 15), (200, 25)]
    big = [s for s in full if s.p == 10_000 and s.block_size == 25][0]
    assert big.n_blocks == 400
    assert all(s.n == 100 for s in full)
    # 15 does not divide any p, so those scenarios end with a shorter block
    assert all(s.allow_partial_block == (s.block_size == 15) for s in full)


@pytest.mark.parametrize("f,b,expected", [(0, 5, 0), (4, 5, 0), (5, 5, 1)])
def test_block_of(f, b, expected):
    assert block_of(f, b) == expected


def test_block_of_negative():
    with pytest.raises(ValueError):
        block_of(-1, 5)


def test_ground_truth_first_feature_of_blocks():
    truth = ground_truth(ScenarioSpec(p=200, block_size=25))
    assert truth.generating_features == (0, 25, 50, 75, 100)
    assert truth.relevant_blocks == frozenset(range(5))
    assert GroundTruth.from_dict(truth.to_dict()) == truth
    with pytest.raises(ValueError):
        GroundTruth((0, 1), 5)


def test_sample_reproducible():
    spec = ScenarioSpec(p=50, block_size=5, seed=7)
    a, ta = sample_dataset(spec)
    b, tb = sample_dataset(spec)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y) and ta == tb
    assert a.x.shape == (100, 50) and a.feature_names[0] == "x0"


def test_test_dataset_independent_same_truth():
    spec = ScenarioSpec(p=50, block_size=5, seed=7)
    train, t1 = sample_dataset(spec)
    test, t2 = sample_test_dataset(spec)
    assert t1 == t2
    assert not np.array_equal(train.x, test.x)
    again, _ = sample_dataset(ScenarioSpec(p=50, block_size=5, seed=7 + TEST_SEED_OFFSET))
    assert np.array_equal(again.x, test.x)


def test_large_sample_matches_covariance():
    spec = ScenarioSpec(n=10_000, p=30, block_size=5, seed=3)
    data, _ = sample_dataset(spec)
    emp = np.cov(data.x, rowvar=False)
    assert np.abs(emp - make_block_covariance(spec)).max() < 0.05
    assert np.abs(data.x.mean(axis=0)).max() < 0.05


def test_label_balance():
    data, _ = sample_dataset(ScenarioSpec(n=20_000, p=10, block_size=1, seed=1))
    assert abs(data.y.mean() - 0.5) < 0.02


def test_labels_follow_generating_features():
    from stabtune.l0logreg import fit_logistic

    data, truth = sample_dataset(ScenarioSpec(n=20_000, p=12, block_size=2, seed=4))
    m = fit_logistic(data, truth.generating_features)
    assert np.allclose(m.coefficients, 1.0, atol=0.1)
    assert abs(m.intercept) < 0.1


@settings(max_examples=20)
@given(st.sampled_from([1, 2, 3, 6]), st.integers(0, 2**31))
def test_generating_features_in_distinct_blocks(b, seed):
    spec = ScenarioSpec(n=5, p=36, block_size=b, seed=seed)
    _, truth = sample_dataset(spec)
    blocks = [block_of(f, b) for f in truth.generating_features]
    assert len(set(blocks)) == len(blocks) == spec.n_generating

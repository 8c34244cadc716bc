import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.special import expit

from stabtune.l0logreg import (
    Dataset,
    DegenerateDesignError,
    SolverOptions,
    SparseModel,
    SupportTooLargeError,
    accuracy,
    fit_l0,
    fit_l0_exhaustive,
    fit_l0_path,
    fit_logistic,
    logistic_objective,
    predict_class,
)

from conftest import random_logistic_data


def scipy_loss(data, support, ridge=1e-6):
    """Independent oracle: minimise the standardized penalised objective
    with a quasi-Newton method."""
    x = data.x[:, list(support)]
    z = (x - x.mean(0)) / x.std(0)
    xb = np.column_stack([np.ones(data.n), z])
    y = data.y

    def f(b):
        eta = xb @ b
        return np.logaddexp(0, eta).sum() - y @ eta + 0.5 * ridge * b @ b

    def g(b):
        return xb.T @ (expit(xb @ b) - y) + ridge * b

    res = minimize(f, np.zeros(xb.shape[1]), jac=g, method="BFGS", options={"gtol": 1e-10, "maxiter": 5000})
    return res.fun


# --------------------------------------------------------------------------
# Dataset / SparseModel contracts
# --------------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), [0, 1, 2])
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan], [1.0]]), [0, 1])
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), [0, 1])
    d = Dataset(np.ones((2, 2)), [0, 1], ["a", "b"])
    assert d.n == 2 and d.p == 2 and d.subset([1]).y.tolist() == [1]


def test_sparse_model_validation():
    with pytest.raises(ValueError):
        SparseModel((0, 1), [1.0], 0.0, True)
    with pytest.raises(ValueError):
        SparseModel((0,), [np.inf], 0.0, True)


# --------------------------------------------------------------------------
# fit_logistic
# --------------------------------------------------------------------------


def test_intercept_only_balanced():
    d = Dataset(np.zeros((8, 1)), [0, 1] * 4)
    m = fit_logistic(d, [])
    assert m.support == () and m.intercept == pytest.approx(0.0, abs=1e-8)


def test_intercept_only_logit():
    d = Dataset(np.zeros((8, 1)), [1, 1, 1, 0] * 2)
    assert fit_logistic(d, []).intercept == pytest.approx(math.log(3), abs=1e-6)


def test_separable_feature_not_converged():
    x = np.arange(10.0)[:, None]
    y = (x[:, 0] >= 5).astype(int)
    m = fit_logistic(Dataset(x, y), [0])
    assert not m.converged
    assert np.all(np.isfinite(m.coefficients))
    assert accuracy(m, Dataset(x, y)) == 1.0


def test_fit_logistic_matches_scipy_oracle(small_data):
    m = fit_logistic(small_data, [0, 2, 5])
    assert m.converged
    assert m.loss == pytest.approx(scipy_loss(small_data, [0, 2, 5]), rel=1e-9)


def test_fit_logistic_matches_sklearn_coefficients(small_data):
    from sklearn.linear_model import LogisticRegression

    ref = LogisticRegression(penalty=None, tol=1e-12, max_iter=10_000).fit(small_data.x[:, [0, 1]], small_data.y)
    m = fit_logistic(small_data, [1, 0])
    assert m.support == (0, 1)
    assert np.allclose(m.coefficients, ref.coef_[0], atol=1e-4)
    assert m.intercept == pytest.approx(ref.intercept_[0], abs=1e-4)


def test_fit_logistic_gradient_small(small_data):
    m = fit_logistic(small_data, [0, 1, 3])
    _, grad = logistic_objective(m, small_data)
    assert np.linalg.norm(grad) <= 1e-6


def test_fit_logistic_support_checks(small_data):
    with pytest.raises(ValueError):
        fit_logistic(small_data, [99])
    tiny = Dataset(np.random.default_rng(0).standard_normal((3, 5)), [0, 1, 0])
    with pytest.raises(SupportTooLargeError):
        fit_logistic(tiny, [0, 1, 2])


def test_degenerate_design_error():
    # a large negative ridge makes every Hessian indefinite
    with pytest.raises(DegenerateDesignError, match="degenerate design"):
        fit_logistic(random_logistic_data(20, 2, 0), [0, 1], SolverOptions(ridge=-1e6))


# --------------------------------------------------------------------------
# fit_l0 and the exhaustive oracle
# --------------------------------------------------------------------------


def test_k_zero_intercept_only(small_data):
    assert fit_l0(small_data, 0).support == ()
    assert fit_l0_exhaustive(small_data, 0).support == ()


def test_latent_logit_feature_found():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 3))
    y = (rng.random(200) < expit(2.0 * x[:, 0])).astype(int)
    data = Dataset(x, y)
    assert fit_l0(data, 1).support == (0,)
    losses = [fit_logistic(data, [j]).loss for j in range(3)]
    assert int(np.argmin(losses)) == 0


def test_exhaustive_tie_break_duplicated_column():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((60, 3))
    x[:, 1] = x[:, 0]
    y = (rng.random(60) < expit(2 * x[:, 0])).astype(int)
    data = Dataset(x, y)
    assert fit_l0_exhaustive(data, 1).support == (0,)
    assert fit_l0(data, 1).support == (0,)


@pytest.mark.parametrize("seed", range(4))
def test_l0_matches_exhaustive_p10_k2(seed):
    data = random_logistic_data(80, 10, seed, signal=(1.0, -1.0, 0.5))
    greedy = fit_l0(data, 2)
    exact = fit_l0_exhaustive(data, 2)
    assert greedy.loss == pytest.approx(exact.loss, rel=1e-8)


def test_exhaustive_dominates_greedy():
    data = random_logistic_data(60, 6, 11)
    assert fit_l0_exhaustive(data, 2).loss <= fit_l0(data, 2).loss + 1e-12


def test_exhaustive_loss_matches_enumeration_with_oracle():
    data = random_logistic_data(50, 5, 3)
    exact = fit_l0_exhaustive(data, 2)
    best = min(scipy_loss(data, s) for r in (1, 2) for s in itertools.combinations(range(5), r))
    assert exact.loss == pytest.approx(best, rel=1e-7)


def test_support_too_large(small_data):
    with pytest.raises(SupportTooLargeError, match="support too large"):
        fit_l0(small_data, small_data.p + 1)
    with pytest.raises(ValueError):
        fit_l0(small_data, -1)
    with pytest.raises(ValueError, match="budget"):
        fit_l0_exhaustive(random_logistic_data(80, 30, 0), 5, budget=1000)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_path_loss_non_increasing(seed):
    data = random_logistic_data(60, 12, seed)
    path = fit_l0_path(data, 8)
    losses = [m.loss for m in path]
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(losses, losses[1:]))
    assert [m.k for m in path] == list(range(9))


def test_fit_l0_equals_path_entry(small_data):
    path = fit_l0_path(small_data, 4)
    for k in (0, 2, 4):
        m = fit_l0(small_data, k)
        assert m.support == path[k].support and m.loss == path[k].loss


def test_fit_l0_deterministic(small_data):
    a, b = fit_l0(small_data, 3), fit_l0(small_data, 3)
    assert a.support == b.support and np.array_equal(a.coefficients, b.coefficients)


def test_fit_l0_reported_coefficients_refit(small_data):
    m = fit_l0(small_data, 3)
    ref = fit_logistic(small_data, m.support)
    assert np.allclose(m.coefficients, ref.coefficients, atol=1e-9)


# --------------------------------------------------------------------------
# prediction and accuracy
# --------------------------------------------------------------------------


def test_predict_class_examples():
    assert predict_class(SparseModel((), [], 0.0, True), [3.0, -1.0]) == 1
    assert predict_class(SparseModel((), [], -5.0, True), [3.0]) == 0
    assert predict_class(SparseModel((0,), [1.0], 0.0, True), [-2.0]) == 0
    with pytest.raises(ValueError):
        predict_class(SparseModel((), [], 0.0, True), [np.nan])


def test_accuracy_examples():
    all_one = SparseModel((), [], 1.0, True)
    assert accuracy(all_one, Dataset(np.zeros((3, 1)), [1, 1, 1])) == 1.0
    assert accuracy(all_one, Dataset(np.zeros((3, 1)), [0, 0, 0])) == 0.0
    assert accuracy(all_one, Dataset(np.zeros((4, 1)), [1, 0, 1, 0])) == 0.5


@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(-5, 5),
    st.floats(1e-3, 1e3),
    st.lists(st.floats(-10, 10), min_size=3, max_size=3),
)
def test_predict_invariant_to_positive_rescaling(coef, intercept, scale, x):
    m = SparseModel((0, 1, 2), coef, intercept, True)
    m2 = SparseModel((0, 1, 2), np.asarray(coef) * scale, intercept * scale, True)
    d = m.decision_function(x)[0]
    if abs(d) > 1e-9:  # away from the boundary, where rounding could flip the sign
        assert predict_class(m, x) == predict_class(m2, x)


@given(st.integers(0, 1000))
def test_accuracy_in_unit_interval(seed):
    data = random_logistic_data(20, 3, seed)
    rng = np.random.default_rng(seed)
    m = SparseModel((0, 2), rng.standard_normal(2), float(rng.standard_normal()), True)
    assert 0.0 <= accuracy(m, data) <= 1.0

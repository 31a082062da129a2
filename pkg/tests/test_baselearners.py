import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copboost.baselearners import (
    LearnerBank, LearnerSpec, build_learners, design_matrix, difference_penalty, fit_to_gradient, hat_trace,
    intercept, linear, make_learner, penalty_lambda_for_df, predict_bl, pspline, restore_learner,
)
from copboost.errors import DomainError, SchemaError


def test_intercept_design():
    np.testing.assert_array_equal(design_matrix(intercept(), np.arange(5.0)), np.ones((5, 1)))


def test_linear_design_centered():
    np.testing.assert_array_equal(design_matrix(linear(0), np.array([1.0, 2.0, 3.0])), [[-1.0], [0.0], [1.0]])


def test_pspline_partition_of_unity(rng):
    x = rng.uniform(-1, 1, 300)
    B = design_matrix(pspline(0), x)
    assert B.shape == (300, 24)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)


def test_pspline_extrapolates_without_error(rng):
    x = rng.uniform(-1, 1, 200)
    lr = make_learner(pspline(0), x)
    B = lr.basis(np.array([-1.5, 1.5]))
    assert np.all(np.isfinite(B))


def test_lambda_zero_at_full_df(rng):
    x = rng.uniform(size=200)
    B = design_matrix(pspline(0), x)
    assert penalty_lambda_for_df(B.T @ B, difference_penalty(24), 24) == 0.0


def test_lambda_for_df_hat_trace_oracle(rng):
    x = rng.uniform(size=500)
    lr = make_learner(pspline(0), x)
    K = difference_penalty(24)
    assert hat_trace(lr._btb, K, lr.lam) == pytest.approx(4.0, abs=1e-6)


def test_df_tends_to_null_space(rng):
    x = rng.uniform(size=300)
    B = design_matrix(pspline(0), x)
    assert hat_trace(B.T @ B, difference_penalty(24), 1e12) == pytest.approx(2.0, abs=1e-3)


def test_hat_trace_decreasing_in_lambda(rng):
    x = rng.uniform(size=300)
    B = design_matrix(pspline(0), x)
    K = difference_penalty(24)
    tr = [hat_trace(B.T @ B, K, lam) for lam in np.logspace(-6, 8, 30)]
    assert np.all(np.diff(tr) < 0)


def test_infeasible_df(rng):
    x = rng.uniform(size=300)
    B = design_matrix(pspline(0), x)
    with pytest.raises(DomainError):
        penalty_lambda_for_df(B.T @ B, difference_penalty(24), 1.5)
    with pytest.raises(DomainError):
        penalty_lambda_for_df(B.T @ B, difference_penalty(24), 30)


def test_linear_exact_ols():
    f = fit_to_gradient(linear(0), np.array([1.0, 2.0, 3.0]), np.array([-2.0, 0.0, 2.0]))
    assert f.coefficients[0] == pytest.approx(2.0)
    assert f.rss == pytest.approx(0.0, abs=1e-24)


def test_pspline_constant_gradient(rng):
    x = rng.uniform(size=200)
    lr = make_learner(pspline(0), x)
    f = lr.fit(np.full(200, 3.5))
    np.testing.assert_allclose(lr.predict(f.coefficients), 3.5, rtol=1e-9)


def test_unpenalized_matches_qr(rng):
    x = rng.uniform(size=400)
    g = rng.normal(size=400)
    lr = make_learner(pspline(0), x, lam=0.0)
    f = lr.fit(g)
    Q, R = np.linalg.qr(lr.design)
    beta = np.linalg.solve(R, Q.T @ g)
    np.testing.assert_allclose(f.coefficients, beta, atol=1e-8)
    assert f.rss == pytest.approx(float(np.sum((g - lr.design @ beta) ** 2)), rel=1e-8)


def test_singular_unpenalized_does_not_crash():
    x = np.r_[np.zeros(50), np.ones(50)]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        lr = make_learner(pspline(0), x, lam=0.0)
    assert any("singular" in str(m.message) for m in w)
    f = lr.fit(np.r_[np.full(50, -1.0), np.full(50, 1.0)])
    assert np.isfinite(f.rss) and f.rss < 1e-8


def test_predict_on_training_reproduces_fit(rng):
    x = rng.uniform(size=150)
    g = rng.normal(size=150)
    for spec in (intercept(), linear(0), pspline(0)):
        lr = make_learner(spec, x)
        f = lr.fit(g)
        np.testing.assert_array_equal(predict_bl(lr, f, x), lr.design @ f.coefficients)


def test_intercept_predicts_constant(rng):
    lr = make_learner(intercept(), np.zeros(10))
    f = lr.fit(rng.normal(size=10))
    np.testing.assert_allclose(predict_bl(lr, f, np.linspace(0, 1, 7)), f.coefficients[0])


def test_linear_prediction_at_mean_is_zero():
    x = np.array([1.0, 2.0, 3.0, 6.0])
    lr = make_learner(linear(0), x)
    f = lr.fit(2.0 * (x - x.mean()))
    assert predict_bl(lr, f, np.array([x.mean()]))[0] == pytest.approx(0.0, abs=1e-15)


def test_rss_not_above_intercept(rng):
    x = rng.uniform(size=200)
    g = rng.normal(size=200)
    r0 = make_learner(intercept(), x).fit(g).rss
    for spec in (linear(0), pspline(0)):
        assert make_learner(spec, x, lam=0.0).fit(g).rss <= r0 + 1e-9


def test_bank_matches_individual_fits(rng):
    X = rng.uniform(-1, 1, (300, 4))
    specs = [intercept()] + [linear(j) for j in range(2)] + [pspline(j) for j in range(4)]
    lrs, kept = build_learners(specs, X)
    bank = LearnerBank(lrs)
    g = rng.normal(size=300)
    rss, _ = bank.rss_all(g)
    direct = [lr.fit(g).rss for lr in lrs]
    np.testing.assert_allclose(rss, direct, rtol=1e-9)
    j, coef, r = bank.best(g)
    assert j == int(np.argmin(direct))
    np.testing.assert_allclose(coef, lrs[j].fit(g).coefficients, rtol=1e-9, atol=1e-12)
    G = rng.normal(size=(300, 3))
    for c, (jj, cc, rr) in enumerate(bank.best_many(G)):
        j2, c2, r2 = bank.best(G[:, c])
        assert jj == j2 and rr == pytest.approx(r2, rel=1e-12)


def test_bank_ties_pick_first():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.column_stack([x, x])
    lrs, _ = build_learners([linear(0), linear(1)], X)
    j, _, _ = LearnerBank(lrs).best(x - x.mean())
    assert j == 0


def test_constant_column_dropped_with_warning(rng):
    X = np.column_stack([rng.uniform(size=20), np.ones(20)])
    with pytest.warns(UserWarning, match="constant"):
        lrs, kept = build_learners([intercept(), linear(0), linear(1)], X)
    assert kept == [intercept(), linear(0)]


def test_restore_learner_bit_exact(rng):
    x = rng.uniform(size=120)
    g = rng.normal(size=120)
    for spec in (intercept(), linear(0), pspline(0)):
        lr = make_learner(spec, x)
        lr2 = restore_learner(lr.state(), x)
        np.testing.assert_array_equal(lr.fit(g).coefficients, lr2.fit(g).coefficients)


def test_spec_validation_and_labels():
    with pytest.raises(SchemaError):
        LearnerSpec("tree", 0)
    with pytest.raises(SchemaError):
        LearnerSpec("linear")
    assert intercept().label() == "(Intercept)"
    assert linear(2).label() == "x3"
    assert pspline(0).label(["age"]) == "bbs(age)"
    assert LearnerSpec.from_dict(pspline(3, df=5.0).to_dict()) == pspline(3, df=5.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(30, 200))
def test_fit_reproducible_bitwise(seed, n):
    r = np.random.default_rng(seed)
    x, g = r.uniform(size=n), r.normal(size=n)
    a = fit_to_gradient(pspline(0), x, g)
    b = fit_to_gradient(pspline(0), x, g)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)
    assert a.rss == b.rss

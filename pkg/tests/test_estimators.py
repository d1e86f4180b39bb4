import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.utils.estimator_checks import parametrize_with_checks

from coadaptive import (
    AdaptiveLassoCV,
    CoAdaptiveLassoCV,
    GroupLasso,
    GroupLassoCV,
    LassoCV,
    WeightedLasso,
)
from coadaptive.data import GroupStructure, standardize
from coadaptive.model_selection import CvPlan, fit_two_stage
from coadaptive.weights import WeightScheme


@parametrize_with_checks(
    [
        WeightedLasso(alpha=0.1),
        GroupLasso(alpha=0.1),
        LassoCV(cv=3, grid_size=10),
        CoAdaptiveLassoCV(cv=3, grid_size=10),
        AdaptiveLassoCV(cv=3, grid_size=10),
        GroupLassoCV(cv=3, grid_size=10),
    ]
)
def test_sklearn_compatible(estimator, check):
    check(estimator)


def _problem(rng, n=80, p=30):
    x = rng.standard_normal((n, p)) * rng.uniform(0.5, 3, p) + rng.uniform(-2, 2, p)
    beta = np.zeros(p)
    beta[:6] = [2, -1.5, 1, 2, -1, 1.5]
    return x, x @ beta + 3 + 0.3 * rng.standard_normal(n), beta


def test_coadaptive_matches_functional_core(rng):
    x, y, _ = _problem(rng)
    groups = GroupStructure.contiguous(30, 3)
    est = CoAdaptiveLassoCV(groups=groups, scheme="coadaptive_nonoverlap", cv=5, grid_size=30).fit(x, y)
    plan = CvPlan(k=5, grid_size=30)
    ref = fit_two_stage(standardize(x, y), groups, WeightScheme("coadaptive_nonoverlap"), plan, plan)
    coef, icpt = standardize(x, y).coef_to_raw(ref.stage2.beta)
    np.testing.assert_array_equal(est.coef_, coef)
    assert est.intercept_ == icpt
    assert est.mu_ == ref.cv2.best_lambda


def test_recovers_support_and_predicts(rng):
    x, y, beta = _problem(rng)
    est = CoAdaptiveLassoCV(groups=[list(range(i, i + 3)) for i in range(0, 30, 3)], cv=5).fit(x, y)
    assert set(np.flatnonzero(est.coef_)) >= set(range(6))
    assert est.score(x, y) > 0.99
    np.testing.assert_allclose(est.predict(x), x @ est.coef_ + est.intercept_)


def test_adaptive_uses_singletons(rng):
    x, y, _ = _problem(rng)
    a = AdaptiveLassoCV(cv=5, grid_size=20).fit(x, y)
    b = CoAdaptiveLassoCV(groups=None, scheme="coadaptive_min", cv=5, grid_size=20).fit(x, y)
    np.testing.assert_allclose(a.coef_, b.coef_, atol=1e-10)
    assert a.result_.scheme.kind == "adaptive"


def test_group_lasso_cv_selects_groups(rng):
    x, y, _ = _problem(rng)
    groups = [list(range(i, i + 3)) for i in range(0, 30, 3)]
    est = GroupLassoCV(groups=groups, cv=5, grid_size=25).fit(x, y)
    active = {j // 3 for j in np.flatnonzero(est.coef_)}
    assert {0, 1} <= active
    assert est.alphas_.size == 25


def test_weighted_lasso_exclusion(rng):
    x, y, _ = _problem(rng)
    w = np.ones(30)
    w[0] = np.inf
    est = WeightedLasso(alpha=0.01, weights=w).fit(x, y)
    assert est.coef_[0] == 0.0 and est.coef_[1] != 0.0


def test_group_size_mismatch(rng):
    x, y, _ = _problem(rng)
    with pytest.raises(ValueError):
        GroupLasso(alpha=0.1, groups=GroupStructure.contiguous(12, 3)).fit(x, y)


def test_invalid_params(rng):
    x, y, _ = _problem(rng)
    with pytest.raises(ValueError):
        CoAdaptiveLassoCV(scheme="bogus").fit(x, y)
    with pytest.raises(ValueError):
        LassoCV(cv=1).fit(x, y)


def test_pipeline_and_clone(rng):
    x, y, _ = _problem(rng)
    pipe = make_pipeline(StandardScaler(), LassoCV(cv=3, grid_size=15))
    scores = cross_val_score(pipe, x, y, cv=3)
    assert np.all(scores > 0.9)
    est = clone(CoAdaptiveLassoCV(scheme="coadaptive_trimmed", trim_fraction=0.2))
    assert est.get_params()["trim_fraction"] == 0.2

"""scikit-learn style estimators over the functional core.

Every estimator standardises ``X`` and centers ``y`` internally, solves on
that scale, and reports ``coef_`` and ``intercept_`` on the raw scale.
"""

from __future__ import annotations

from numbers import Integral, Real

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils._param_validation import Interval, StrOptions
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import GroupStructure, standardize
from .group_lasso import fit_group_lasso
from .model_selection import (
    CvPlan,
    GroupLassoProcedure,
    LassoProcedure,
    cross_validate,
    fit_two_stage,
)
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, fit_weighted_lasso
from .weights import SCHEMES, WeightScheme


def as_groups(groups, n_features: int) -> GroupStructure:
    """Accept a GroupStructure, a list of 0-based index lists, or None
    (singleton groups)."""
    if groups is None:
        return GroupStructure.singletons(n_features)
    if isinstance(groups, GroupStructure):
        if groups.n_features != n_features:
            raise ValueError(
                f"groups cover {groups.n_features} features but X has {n_features}"
            )
        return groups
    return GroupStructure(groups, n_features)


class _LinearBase(RegressorMixin, BaseEstimator):
    def _store(self, data, beta):
        self.coef_, self.intercept_ = data.coef_to_raw(beta)
        return self

    def _data(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        return standardize(X, y)

    def predict(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_ + self.intercept_


class WeightedLasso(_LinearBase):
    """Lasso with per-coefficient penalty weights at a fixed ``alpha``.

    ``weights`` entries may be ``0`` (unpenalised) or ``inf`` (excluded);
    ``None`` gives the plain Lasso. Weights refer to standardised columns.
    """

    _parameter_constraints = {
        "alpha": [Interval(Real, 0, None, closed="left")],
        "weights": ["array-like", None],
        "tol": [Interval(Real, 0, None, closed="neither")],
        "max_iter": [Interval(Integral, 1, None, closed="left")],
    }

    def __init__(self, alpha=1.0, weights=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.alpha = alpha
        self.weights = weights
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._validate_params()
        data = self._data(X, y)
        self.result_ = fit_weighted_lasso(
            data, self.weights, self.alpha, tol=self.tol, max_iter=self.max_iter
        )
        self.n_iter_ = self.result_.iterations
        return self._store(data, self.result_.beta)


class GroupLasso(_LinearBase):
    """Group Lasso at a fixed ``alpha``; overlapping groups use the latent
    (replicated) formulation. ``groups`` holds 0-based index lists."""

    _parameter_constraints = {
        "alpha": [Interval(Real, 0, None, closed="neither")],
        "groups": [list, tuple, GroupStructure, None],
        "scale_by_size": ["boolean"],
        "tol": [Interval(Real, 0, None, closed="neither")],
        "max_iter": [Interval(Integral, 1, None, closed="left")],
    }

    def __init__(self, alpha=1.0, groups=None, scale_by_size=True, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER):
        self.alpha = alpha
        self.groups = groups
        self.scale_by_size = scale_by_size
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._validate_params()
        data = self._data(X, y)
        groups = as_groups(self.groups, data.n_features)
        self.result_ = fit_group_lasso(
            data, groups, self.alpha, tol=self.tol, max_iter=self.max_iter,
            scale_by_size=self.scale_by_size,
        )
        self.n_iter_ = self.result_.iterations
        return self._store(data, self.result_.beta)


_CV_CONSTRAINTS = {
    "cv": [Interval(Integral, 2, None, closed="left")],
    "grid_size": [Interval(Integral, 2, None, closed="left")],
    "lambda_min_ratio": [Interval(Real, 0, 1, closed="neither"), None],
    "one_se": ["boolean"],
    "random_state": [Interval(Integral, 0, None, closed="left")],
    "tol": [Interval(Real, 0, None, closed="neither")],
    "max_iter": [Interval(Integral, 1, None, closed="left")],
}


class _CvBase(_LinearBase):
    def _plan(self) -> CvPlan:
        return CvPlan(
            k=self.cv, seed=self.random_state, grid_size=self.grid_size,
            lambda_min_ratio=self.lambda_min_ratio, one_se=self.one_se,
            tol=self.tol, max_iter=self.max_iter,
        )


class LassoCV(_CvBase):
    """Lasso with ``alpha`` chosen by K-fold cross-validation."""

    _parameter_constraints = dict(_CV_CONSTRAINTS)

    def __init__(self, cv=10, grid_size=100, lambda_min_ratio=None, one_se=False,
                 random_state=0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.cv = cv
        self.grid_size = grid_size
        self.lambda_min_ratio = lambda_min_ratio
        self.one_se = one_se
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._validate_params()
        data = self._data(X, y)
        self.cv_result_ = cross_validate(data, LassoProcedure(), self._plan())
        self.alpha_ = self.cv_result_.best_lambda
        self.alphas_ = self.cv_result_.grid
        self.n_iter_ = self.cv_result_.iterations
        return self._store(data, self.cv_result_.fit.beta)


class CoAdaptiveLassoCV(_CvBase):
    """Two-stage Co-adaptive Lasso.

    Stage 1 is a cross-validated Lasso. Its coefficients set penalty weights
    ``sqrt(|G|) / ||b_G||`` pooled over the groups containing each covariate
    (see ``scheme``), and stage 2 is a cross-validated weighted Lasso with
    those weights held fixed.

    Attributes
    ----------
    alpha_, mu_ : float
        Selected stage-1 and stage-2 tuning parameters (``mu_`` is None when
        stage 1 selected nothing).
    weights_ : ndarray
        Stage-2 penalty weights (``inf`` = excluded).
    result_ : TwoStageResult
    n_iter_ : int
        Solver sweeps over both cross-validation runs.
    """

    _parameter_constraints = {
        **_CV_CONSTRAINTS,
        "groups": [list, tuple, GroupStructure, None],
        "scheme": [StrOptions(set(SCHEMES))],
        "trim_fraction": [Interval(Real, 0, 0.5, closed="left"), None],
    }

    def __init__(self, groups=None, scheme="coadaptive_min", trim_fraction=None, cv=10,
                 grid_size=100, lambda_min_ratio=None, one_se=False, random_state=0,
                 tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.groups = groups
        self.scheme = scheme
        self.trim_fraction = trim_fraction
        self.cv = cv
        self.grid_size = grid_size
        self.lambda_min_ratio = lambda_min_ratio
        self.one_se = one_se
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def _scheme(self) -> WeightScheme:
        return WeightScheme(self.scheme, self.trim_fraction)

    def _groups(self, n_features: int) -> GroupStructure:
        return as_groups(self.groups, n_features)

    def fit(self, X, y):
        self._validate_params()
        data = self._data(X, y)
        groups = self._groups(data.n_features)
        scheme = self._scheme()
        plan = self._plan()
        self.result_ = fit_two_stage(data, groups, scheme, plan, plan)
        self.alpha_ = self.result_.cv1.best_lambda
        self.mu_ = None if self.result_.cv2 is None else self.result_.cv2.best_lambda
        self.weights_ = self.result_.weights
        self.n_iter_ = self.result_.iterations
        return self._store(data, self.result_.stage2.beta)


class AdaptiveLassoCV(CoAdaptiveLassoCV):
    """Two-stage Adaptive Lasso (weights ``1 / |b_j|``) with both tuning
    parameters chosen by cross-validation."""

    _parameter_constraints = dict(_CV_CONSTRAINTS)

    def __init__(self, cv=10, grid_size=100, lambda_min_ratio=None, one_se=False,
                 random_state=0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.cv = cv
        self.grid_size = grid_size
        self.lambda_min_ratio = lambda_min_ratio
        self.one_se = one_se
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def _scheme(self) -> WeightScheme:
        return WeightScheme("adaptive")

    def _groups(self, n_features: int) -> GroupStructure:
        return GroupStructure.singletons(n_features)


class GroupLassoCV(_CvBase):
    """Group Lasso with ``alpha`` chosen by K-fold cross-validation."""

    _parameter_constraints = {
        **_CV_CONSTRAINTS,
        "groups": [list, tuple, GroupStructure, None],
        "scale_by_size": ["boolean"],
    }

    def __init__(self, groups=None, scale_by_size=True, cv=10, grid_size=100,
                 lambda_min_ratio=None, one_se=False, random_state=0, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER):
        self.groups = groups
        self.scale_by_size = scale_by_size
        self.cv = cv
        self.grid_size = grid_size
        self.lambda_min_ratio = lambda_min_ratio
        self.one_se = one_se
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        self._validate_params()
        data = self._data(X, y)
        groups = as_groups(self.groups, data.n_features)
        proc = GroupLassoProcedure(groups, self.scale_by_size)
        self.cv_result_ = cross_validate(data, proc, self._plan())
        self.alpha_ = self.cv_result_.best_lambda
        self.alphas_ = self.cv_result_.grid
        self.n_iter_ = self.cv_result_.iterations
        return self._store(data, self.cv_result_.fit.beta)

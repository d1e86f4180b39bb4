"""K-fold cross-validation over tuning-parameter paths and the two-stage
co-adaptive pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, GroupStructure
from .exceptions import AllExcludedError, NonConvergenceError
from .group_lasso import GroupFitResult, fit_group_lasso_path, group_lambda_max
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    FitResult,
    check_weights,
    fit_lasso_path,
    lambda_grid,
    lambda_max,
)
from .weights import WeightScheme, compute_weights

# failure share of (fold, lambda) cells above which a CV run is flagged
FAILURE_FLAG_SHARE = 0.10


def default_lambda_min_ratio(n: int, p: int, group: bool = False) -> float:
    """Grid floor used when none is given: 1e-3 when ``n >= p`` (``p`` counts
    only penalisable columns); otherwise the saturated end of the path is
    skipped (0.01 Lasso, 0.05 Group Lasso)."""
    if n >= p:
        return 1e-3
    return 5e-2 if group else 1e-2


@dataclass(frozen=True)
class CvPlan:
    """Fold layout and grid specification for one cross-validation run."""

    k: int = 10
    seed: int = 0
    grid_size: int = 100
    lambda_min_ratio: float | None = None
    one_se: bool = False
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def fold_ids(self, n: int) -> np.ndarray:
        """Balanced fold labels (sizes differ by at most one), a deterministic
        function of ``(n, k, seed)``."""
        if self.k < 2:
            raise ValueError("need at least 2 folds")
        if n < self.k:
            raise ValueError(f"cannot split {n} samples into {self.k} folds")
        perm = np.random.default_rng(self.seed).permutation(n)
        ids = np.empty(n, dtype=np.int64)
        ids[perm] = np.arange(n) % self.k
        return ids


class LassoProcedure:
    """Weighted-Lasso path; ``weights=None`` is the plain Lasso."""

    group = False

    def __init__(self, weights=None):
        self.weights = None if weights is None else np.asarray(weights, dtype=float)

    def lambda_max(self, data: Dataset) -> float:
        return lambda_max(data, self.weights)

    def n_free(self, data: Dataset) -> int:
        return int(np.isfinite(check_weights(self.weights, data.n_features, data)).sum())

    def path(self, data: Dataset, grid, plan: CvPlan):
        return fit_lasso_path(
            data, self.weights, grid=grid, tol=plan.tol, max_iter=plan.max_iter
        )

    def zero_fit(self, data: Dataset, lam: float) -> FitResult:
        return _zero_fit(data, lam)


class GroupLassoProcedure:
    group = True

    def __init__(self, groups: GroupStructure, scale_by_size: bool = True):
        self.groups = groups
        self.scale_by_size = scale_by_size

    def lambda_max(self, data: Dataset) -> float:
        return group_lambda_max(data, self.groups, self.scale_by_size)

    def n_free(self, data: Dataset) -> int:
        return data.n_features

    def path(self, data: Dataset, grid, plan: CvPlan):
        return fit_group_lasso_path(
            data, self.groups, grid=grid, tol=plan.tol, max_iter=plan.max_iter,
            scale_by_size=self.scale_by_size,
        )

    def zero_fit(self, data: Dataset, lam: float) -> GroupFitResult:
        return GroupFitResult(
            beta=np.zeros(data.n_features),
            lam=lam,
            active_groups=np.array([], dtype=np.int64),
            block_kkt_residual=0.0,
            iterations=0,
            objective=0.5 * float(data.y @ data.y) / data.n_samples,
            latent=np.zeros(int(self.groups.sizes.sum())),
        )


@dataclass
class CvResult:
    grid: np.ndarray
    cv_curve: np.ndarray
    cv_se: np.ndarray
    best_index: int
    fit: FitResult | GroupFitResult
    fold_ids: np.ndarray
    n_failed: int
    flagged: bool
    iterations: int
    fold_errors: np.ndarray = field(repr=False)

    @property
    def best_lambda(self) -> float:
        return float(self.grid[self.best_index])


def _grid_for(data: Dataset, procedure, plan: CvPlan) -> np.ndarray:
    ratio = plan.lambda_min_ratio
    if ratio is None:
        ratio = default_lambda_min_ratio(data.n_samples, procedure.n_free(data), procedure.group)
    return lambda_grid(procedure.lambda_max(data), plan.grid_size, ratio)


def cross_validate(data: Dataset, procedure, plan: CvPlan = CvPlan(), grid=None) -> CvResult:
    """K-fold CV of a path procedure on held-out squared prediction error.

    Each training fold is re-standardised from the raw data; held-out
    predictions are made on the raw scale. The grid is anchored at the
    full-data ``lambda_max`` and shared by all folds. The selected model is
    the full-data path fit at the best grid point; ties go to the larger
    tuning parameter.
    """
    n = data.n_samples
    if grid is None and procedure.lambda_max(data) == 0:
        return _degenerate(data, procedure, plan)
    if grid is None:
        grid = _grid_for(data, procedure, plan)
    grid = np.asarray(grid, dtype=float)
    ids = plan.fold_ids(n)
    raw_x, raw_y = data.raw()
    errors = np.full((plan.k, grid.size), np.nan)
    sizes = np.bincount(ids, minlength=plan.k).astype(float)
    iterations = 0
    for f in range(plan.k):
        train = np.flatnonzero(ids != f)
        test = np.flatnonzero(ids == f)
        sub = data.subset(train)
        path = procedure.path(sub, grid, plan)
        iterations += path.iterations
        for i, fit in enumerate(path.fits):
            if fit is None:
                continue
            coef, icpt = sub.coef_to_raw(fit.beta)
            resid = raw_y[test] - raw_x[test] @ coef - icpt
            errors[f, i] = float(resid @ resid) / test.size

    ok = ~np.isnan(errors)
    n_failed = int((~ok).sum())
    wts = np.where(ok, sizes[:, None], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        curve = np.nansum(errors * wts, axis=0) / wts.sum(axis=0)
        dev = np.where(ok, (errors - curve) ** 2, 0.0)
        cnt = ok.sum(axis=0)
        se = np.sqrt((dev * wts).sum(axis=0) / wts.sum(axis=0) / np.maximum(cnt - 1, 1))
    valid = np.isfinite(curve)
    if not valid.any():
        raise NonConvergenceError("every cross-validation cell failed")
    best = int(np.argmin(np.where(valid, curve, np.inf)))
    if plan.one_se:
        cutoff = curve[best] + se[best]
        best = int(np.flatnonzero(valid & (curve <= cutoff))[0])

    full = procedure.path(data, grid, plan)
    iterations += full.iterations
    fit = full.fits[best]
    if fit is None:
        err = full.errors.get(best)
        raise NonConvergenceError(
            f"full-data fit at the selected tuning parameter failed: {err}",
            getattr(err, "result", None),
        )
    return CvResult(
        grid=grid,
        cv_curve=curve,
        cv_se=se,
        best_index=best,
        fit=fit,
        fold_ids=ids,
        n_failed=n_failed,
        flagged=n_failed > FAILURE_FLAG_SHARE * errors.size,
        iterations=iterations,
        fold_errors=errors,
    )


def _degenerate(data: Dataset, procedure, plan: CvPlan) -> CvResult:
    """``lambda_max == 0``: the zero fit is optimal for every tuning parameter."""
    ids = plan.fold_ids(data.n_samples)
    _, raw_y = data.raw()
    errors = np.array(
        [[float(np.mean((raw_y[ids == f] - raw_y[ids != f].mean()) ** 2))] for f in range(plan.k)]
    )
    sizes = np.bincount(ids, minlength=plan.k).astype(float)
    curve = np.array([float(errors[:, 0] @ sizes / sizes.sum())])
    return CvResult(
        grid=np.zeros(1),
        cv_curve=curve,
        cv_se=np.zeros(1),
        best_index=0,
        fit=procedure.zero_fit(data, 0.0),
        fold_ids=ids,
        n_failed=0,
        flagged=False,
        iterations=0,
        fold_errors=errors,
    )


@dataclass
class TwoStageResult:
    """Outcome of the sequential Lasso -> reweighted Lasso pipeline."""

    stage1: FitResult
    weights: np.ndarray
    stage2: FitResult
    scheme: WeightScheme
    cv1: CvResult
    cv2: CvResult | None
    all_excluded: bool = False

    @property
    def iterations(self) -> int:
        return self.cv1.iterations + (self.cv2.iterations if self.cv2 else 0)


def _zero_fit(data: Dataset, lam: float) -> FitResult:
    return FitResult(
        beta=np.zeros(data.n_features),
        lam=lam,
        active_set=np.array([], dtype=np.int64),
        kkt_residual=0.0,
        iterations=0,
        objective=0.5 * float(data.y @ data.y) / data.n_samples,
    )


def fit_two_stage(
    data: Dataset,
    groups: GroupStructure,
    scheme: WeightScheme,
    plan1: CvPlan = CvPlan(),
    plan2: CvPlan | None = None,
    stage1: CvResult | None = None,
) -> TwoStageResult:
    """Cross-validated Lasso, then a cross-validated weighted Lasso whose
    weights come from the full-data first-stage fit.

    The weights are computed once and held fixed across second-stage folds.
    If every weight is infinite (the first stage selected nothing) the second
    stage is the zero fit and ``all_excluded`` is set.

    ``stage1`` may carry a precomputed first-stage CV result (it must come
    from the plain Lasso with ``plan1``) so several pipelines can share it.
    """
    plan2 = plan1 if plan2 is None else plan2
    scheme.check_groups(groups)
    cv1 = stage1 if stage1 is not None else cross_validate(data, LassoProcedure(), plan1)
    w = compute_weights(cv1.fit.beta, groups, scheme)
    w = check_weights(w, data.n_features, data)
    if not np.isfinite(w).any():
        return TwoStageResult(
            stage1=cv1.fit, weights=w, stage2=_zero_fit(data, 0.0), scheme=scheme,
            cv1=cv1, cv2=None, all_excluded=True,
        )
    try:
        cv2 = cross_validate(data, LassoProcedure(w), plan2)
    except AllExcludedError:
        return TwoStageResult(
            stage1=cv1.fit, weights=w, stage2=_zero_fit(data, 0.0), scheme=scheme,
            cv1=cv1, cv2=None, all_excluded=True,
        )
    return TwoStageResult(
        stage1=cv1.fit, weights=w, stage2=cv2.fit, scheme=scheme, cv1=cv1, cv2=cv2,
    )

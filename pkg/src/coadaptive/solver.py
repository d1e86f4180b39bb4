"""Weighted Lasso by cyclic coordinate descent.

Solves

    min_b 0.5 * ||y - X b||_n^2 + lam * sum_j w_j |b_j|

on a standardised :class:`~coadaptive.data.Dataset`. ``w_j = inf`` pins a
coordinate to exactly zero, ``w_j = 0`` leaves it unpenalised. The plain
Lasso is the all-ones weight vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import Dataset
from .exceptions import (
    AllExcludedError,
    NonConvergenceError,
    NonFiniteError,
    SingularGramError,
)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
# reciprocal condition number below which a restricted Gram is rejected
RCOND_THRESHOLD = 1e-12
# relative inflation applied to lambda_max so that fitting exactly at it is
# robust to rounding in the KKT comparison
_LAMBDA_MAX_INFLATION = 1e-12
# sweeps of plain coordinate descent between support-restricted polish steps
_POLISH_EVERY = 10
# relative eigenvalue below which a support Gram is treated as singular
_NULL_EIG = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Solution of one weighted-Lasso problem on the standardised scale."""

    beta: np.ndarray
    lam: float
    active_set: np.ndarray
    kkt_residual: float
    iterations: int
    objective: float
    converged: bool = True

    def __post_init__(self):
        self.beta.flags.writeable = False
        self.active_set.flags.writeable = False


@dataclass
class LambdaPath:
    """Warm-started fits along a decreasing tuning-parameter grid.

    ``fits[i]`` is ``None`` when the solver failed at ``grid[i]``; the error
    is kept in ``errors[i]``.
    """

    grid: np.ndarray
    fits: list
    errors: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return sum(f.iterations for f in self.fits if f is not None)

    def coef_matrix(self) -> np.ndarray:
        """(len(grid), p) matrix of coefficients; failed points are NaN."""
        p = next(f.beta.size for f in self.fits if f is not None)
        out = np.full((len(self.grid), p), np.nan)
        for i, f in enumerate(self.fits):
            if f is not None:
                out[i] = f.beta
        return out


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``; works elementwise on arrays."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def check_weights(weights, p: int, data: Dataset | None = None) -> np.ndarray:
    """Validate a weight vector and fold in the dataset's constant columns."""
    if weights is None:
        w = np.ones(p)
    else:
        w = np.array(weights, dtype=float)
        if w.shape != (p,):
            raise ValueError(f"weights must have shape ({p},), got {w.shape}")
        if np.isnan(w).any() or (w < 0).any():
            raise ValueError("weights must be non-negative and not NaN")
    if data is not None and data.constant_columns.any():
        w = np.where(data.constant_columns, np.inf, w)
    return w


def objective(data: Dataset, beta, weights, lam: float) -> float:
    """``0.5 * ||y - X beta||_n^2 + lam * sum_j w_j |beta_j|`` (0 * inf := 0)."""
    beta = np.asarray(beta, dtype=float)
    r = data.y - data.x @ beta
    nz = beta != 0
    pen = float(np.sum(np.asarray(weights)[nz] * np.abs(beta[nz])))
    return 0.5 * float(r @ r) / data.n_samples + lam * pen


def kkt_residual(data: Dataset, beta, weights, lam: float) -> float:
    """Largest violation of the weighted-Lasso subgradient conditions."""
    w = np.asarray(weights, dtype=float)
    beta = np.asarray(beta, dtype=float)
    g = data.x.T @ (data.y - data.x @ beta) / data.n_samples
    fin = np.isfinite(w) & ~data.constant_columns
    thr = lam * w[fin]
    b, g = beta[fin], g[fin]
    v = np.where(
        b != 0,
        np.abs(g - thr * np.sign(b)),
        np.maximum(np.abs(g) - thr, 0.0),
    )
    return float(v.max()) if v.size else 0.0


def lambda_max(data: Dataset, weights=None) -> float:
    """Smallest tuning parameter at which the all-zero fit is optimal.

    Unpenalised (zero-weight) columns are first regressed out; the bound is
    then ``max_j |x_j^T r / n| / w_j`` over finite positive weights.
    """
    w = check_weights(weights, data.n_features, data)
    finite = np.isfinite(w)
    if not finite.any():
        raise AllExcludedError("every coordinate has an infinite weight")
    free = finite & (w == 0)
    r = data.y
    if free.any():
        b = _least_squares(data, np.flatnonzero(free))
        r = data.y - data.x @ b
    pen = finite & (w > 0)
    if not pen.any():
        return 0.0
    g = np.abs(data.x[:, pen].T @ r) / data.n_samples
    return float(np.max(g / w[pen])) * (1.0 + _LAMBDA_MAX_INFLATION)


def ols_restricted(data: Dataset, t) -> np.ndarray:
    """Least squares on the columns in ``t``, zeros elsewhere.

    Raises
    ------
    SingularGramError
        If the reciprocal condition number of ``X_t^T X_t`` is below
        ``RCOND_THRESHOLD``.
    """
    t = np.unique(np.asarray(t, dtype=np.int64))
    beta = np.zeros(data.n_features)
    if t.size == 0:
        return beta
    xt = data.x[:, t]
    gram = xt.T @ xt
    cond = np.linalg.cond(gram)
    rcond = 0.0 if not np.isfinite(cond) else 1.0 / cond
    if rcond < RCOND_THRESHOLD:
        raise SingularGramError(
            f"Gram matrix of {t.size} columns is singular (rcond={rcond:.2e})",
            support=t,
            rcond=rcond,
        )
    beta[t] = np.linalg.solve(gram, xt.T @ data.y)
    return beta


def _least_squares(data: Dataset, t) -> np.ndarray:
    """``ols_restricted``, falling back to the minimum-norm minimiser when the
    Gram is singular (the fitted values are unique either way)."""
    try:
        return ols_restricted(data, t)
    except SingularGramError:
        beta = np.zeros(data.n_features)
        beta[t] = np.linalg.lstsq(data.x[:, t], data.y, rcond=None)[0]
        return beta


def fit_weighted_lasso(
    data: Dataset,
    weights=None,
    lam: float = 1.0,
    warm_start=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Solve the weighted Lasso at a single tuning parameter.

    Parameters
    ----------
    data : Dataset
    weights : array-like of shape (p,), optional
        Per-coordinate penalty weights in ``[0, inf]``; defaults to ones.
    lam : float
        Tuning parameter, ``>= 0``.
    warm_start : array-like of shape (p,), optional
        Starting point; entries with infinite weight are reset to zero.
    tol : float
        Target for the KKT residual.
    max_iter : int
        Cap on coordinate-descent sweeps (full passes and working-set passes).

    Raises
    ------
    NonConvergenceError
        ``max_iter`` sweeps were not enough. ``err.result`` holds the last
        iterate, which is also the best one since every sweep is monotone.
    NonFiniteError
        The iterate became non-finite.
    """
    n, p = data.x.shape
    if lam < 0:
        raise ValueError("lam must be non-negative")
    w = check_weights(weights, p, data)
    finite = np.isfinite(w)

    if lam == 0 or not (w[finite] > 0).any():
        if finite.sum() > n:
            raise ValueError(
                "unpenalised fit with more free coordinates than samples is "
                "ill-posed; use a positive lambda"
            )
        beta = _least_squares(data, np.flatnonzero(finite))
        return _result(data, beta, w, lam, iterations=1, converged=True)

    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    beta[~finite] = 0.0
    thr = lam * w
    y = np.ascontiguousarray(data.y)
    sweeps = 0
    chunk = _POLISH_EVERY
    while True:
        budget = min(chunk, int(max_iter) - sweeps)
        used, kkt, status = _kernels.cd_weighted_lasso(
            data.x, y, data.col_sq_norms, thr, beta, float(tol), budget
        )
        sweeps += int(used)
        if status != _kernels.MAX_ITER or sweeps >= max_iter:
            break
        if _polish(data, beta, thr):
            sweeps += 1
        chunk = min(2 * chunk, 4 * _POLISH_EVERY)
    if status == _kernels.NONFINITE:
        raise NonFiniteError("coordinate descent produced a non-finite iterate")
    res = _result(data, beta, w, lam, iterations=int(sweeps), converged=status == 0, kkt=kkt)
    if not np.isfinite(res.objective):
        raise NonFiniteError("objective is not finite")
    if status == _kernels.MAX_ITER:
        raise NonConvergenceError(
            f"no convergence after {sweeps} sweeps (kkt residual {kkt:.3e})", res
        )
    return res


def _polish(data: Dataset, beta: np.ndarray, thr: np.ndarray) -> bool:
    """Move ``beta`` toward the minimiser of the objective restricted to its
    current support and sign pattern, stopping where a coefficient would
    change sign. Modifies ``beta`` in place; returns whether it moved.

    Within a fixed orthant the objective is a convex quadratic, so the step
    never increases it. If the support Gram is singular the step follows a
    null direction instead (the objective is linear and non-increasing along
    it) until one coefficient reaches zero.
    """
    support = np.flatnonzero(beta)
    n = data.n_samples
    if support.size == 0:
        return False
    xs = data.x[:, support]
    gram = xs.T @ xs / n
    signs = np.sign(beta[support])
    rhs = xs.T @ data.y / n - thr[support] * signs
    cur = beta[support]

    def quad(b):
        return 0.5 * float(b @ gram @ b) - float(rhs @ b)

    evals, evecs = np.linalg.eigh(gram)
    null = evals <= _NULL_EIG * max(evals[-1], 1.0)
    if null.any():
        basis = evecs[:, null]
        d = basis @ (basis.T @ rhs)
        if np.linalg.norm(d) <= 1e-12 * max(np.linalg.norm(rhs), 1.0):
            d = basis[:, 0]
        shrinking = cur * d < 0
        if not shrinking.any():
            d = -d
            shrinking = cur * d < 0
            if not shrinking.any() or rhs @ d < -1e-12 * np.linalg.norm(rhs):
                return False
        ratios = -cur[shrinking] / d[shrinking]
        k = int(np.argmin(ratios))
        step = cur + ratios[k] * d
        step[np.flatnonzero(shrinking)[k]] = 0.0
        if not quad(step) <= quad(cur) + 1e-15 * max(abs(quad(cur)), 1.0):
            return False
        beta[support] = step
        return True

    target = evecs @ ((evecs.T @ rhs) / evals)
    if not np.isfinite(target).all():
        return False
    crossing = signs * target < 0
    alpha = 1.0
    if crossing.any():
        ratios = cur[crossing] / (cur[crossing] - target[crossing])
        alpha = float(min(1.0, ratios.min()))
    step = cur + alpha * (target - cur)
    if alpha < 1.0:
        hit = np.flatnonzero(crossing)[np.argmin(ratios)]
        step[hit] = 0.0
    if not quad(step) <= quad(cur):
        return False
    beta[support] = step
    return True


def _result(data, beta, w, lam, iterations, converged, kkt=None) -> FitResult:
    beta = np.where(np.isfinite(w), beta, 0.0)
    if kkt is None:
        kkt = kkt_residual(data, beta, w, lam)
    return FitResult(
        beta=beta,
        lam=float(lam),
        active_set=np.flatnonzero(beta),
        kkt_residual=float(kkt),
        iterations=iterations,
        objective=objective(data, beta, w, lam),
        converged=converged,
    )


def lambda_grid(lam_max: float, grid_size: int = 100, lambda_min_ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced decreasing grid from ``lam_max`` to ``lambda_min_ratio * lam_max``."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if not 0 < lambda_min_ratio < 1:
        raise ValueError("lambda_min_ratio must lie in (0, 1)")
    if lam_max <= 0:
        raise ValueError("lambda_max must be positive")
    return lam_max * np.logspace(0, np.log10(lambda_min_ratio), grid_size)


def fit_lasso_path(
    data: Dataset,
    weights=None,
    grid_size: int = 100,
    lambda_min_ratio: float = 1e-3,
    grid=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm: bool = True,
) -> LambdaPath:
    """Fit the weighted Lasso along a decreasing grid with warm starts.

    A failure at one grid point is recorded in ``path.errors`` and the path
    continues from the last good iterate.
    """
    w = check_weights(weights, data.n_features, data)
    if grid is None:
        grid = lambda_grid(lambda_max(data, w), grid_size, lambda_min_ratio)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise ValueError("grid must be strictly decreasing")
    fits: list = []
    errors: dict = {}
    beta = None
    for i, lam in enumerate(grid):
        try:
            fit = fit_weighted_lasso(
                data, w, lam, warm_start=beta if warm else None, tol=tol,
                max_iter=max_iter,
            )
        except NonConvergenceError as err:
            errors[i] = err
            fits.append(None)
            if err.result is not None and warm:
                beta = err.result.beta
            continue
        except (NonFiniteError, ValueError) as err:
            errors[i] = err
            fits.append(None)
            continue
        fits.append(fit)
        beta = fit.beta
    return LambdaPath(grid=grid, fits=fits, errors=errors)

"""Group Lasso by block coordinate descent.

    min_b 0.5 * ||y - X b||_n^2 + lam * sum_G c_G ||b_G||,   c_G = sqrt(|G|)

Overlapping groups are handled by latent-variable replication: every column
is duplicated once per group containing it, the resulting non-overlapping
problem is solved, and replicated coefficients are summed back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .data import Dataset, GroupStructure
from .exceptions import NonConvergenceError, NonFiniteError
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, lambda_grid

# block sweeps per kernel call; a Newton polish on the active groups runs
# only when a chunk cuts the KKT residual by less than _STALL
_POLISH_EVERY = 10
_STALL = 0.1
_NEWTON_STEPS = 8
_CG_ITERS = 20


@dataclass(frozen=True)
class GroupFitResult:
    beta: np.ndarray
    lam: float
    active_groups: np.ndarray
    block_kkt_residual: float
    iterations: int
    objective: float
    latent: np.ndarray
    converged: bool = True

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


class _BlockProblem:
    """Replicated design with groups as contiguous column ranges, plus the
    eigendecomposition of every block Gram."""

    def __init__(self, data: Dataset, groups: GroupStructure, scale_by_size: bool = True):
        if groups.n_features != data.n_features:
            raise ValueError(
                f"groups cover {groups.n_features} columns but data has {data.n_features}"
            )
        n = data.n_samples
        cols = np.concatenate(groups.groups)
        self.columns = cols
        self.x = np.asfortranarray(data.x[:, cols])
        self.y = np.ascontiguousarray(data.y)
        sizes = groups.sizes
        self.gptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.weights = np.sqrt(sizes) if scale_by_size else np.ones(len(sizes))
        evals = np.empty(cols.size)
        evecs = []
        eptr = [0]
        for k in range(groups.n_groups):
            a, b = self.gptr[k], self.gptr[k + 1]
            xb = self.x[:, a:b]
            d, q = np.linalg.eigh(xb.T @ xb / n)
            evals[a:b] = np.maximum(d, 0.0)
            evecs.append(np.ascontiguousarray(q).ravel())
            eptr.append(eptr[-1] + q.size)
        self.evals = evals
        self.evecs = np.concatenate(evecs)
        self.eptr = np.asarray(eptr, dtype=np.int64)
        self.groups = groups
        self.n = n
        self.p = data.n_features

    def collapse(self, latent: np.ndarray) -> np.ndarray:
        return np.bincount(self.columns, weights=latent, minlength=self.p)

    def block_norms(self, latent: np.ndarray) -> np.ndarray:
        return np.sqrt(np.add.reduceat(latent**2, self.gptr[:-1]))

    def gradient_norms(self, latent: np.ndarray) -> np.ndarray:
        r = self.y - self.x @ latent
        g = self.x.T @ r / self.n
        return np.sqrt(np.add.reduceat(g**2, self.gptr[:-1]))

    def objective(self, latent: np.ndarray, lam: float) -> float:
        r = self.y - self.x @ latent
        return 0.5 * float(r @ r) / self.n + lam * float(self.weights @ self.block_norms(latent))

    def block_kkt(self, latent: np.ndarray, lam: float) -> float:
        r = self.y - self.x @ latent
        g = self.x.T @ r / self.n
        worst = 0.0
        for k in range(self.groups.n_groups):
            a, b = self.gptr[k], self.gptr[k + 1]
            pen = lam * self.weights[k]
            bn = np.linalg.norm(latent[a:b])
            if bn == 0:
                v = max(np.linalg.norm(g[a:b]) - pen, 0.0)
            else:
                v = np.linalg.norm(g[a:b] - pen * latent[a:b] / bn)
            worst = max(worst, v)
        return worst


def _newton_polish(prob: _BlockProblem, latent: np.ndarray, pens: np.ndarray) -> bool:
    """Damped Newton-CG steps on the active blocks, where the objective is smooth.

    Backtracking keeps every active block away from zero and only accepts
    decreases of the objective, so this never undoes block-CD progress.
    Modifies ``latent`` in place; returns whether it moved.
    """
    norms = prob.block_norms(latent)
    active = np.flatnonzero(norms > 0)
    if active.size == 0:
        return False
    idx = np.concatenate([np.arange(prob.gptr[k], prob.gptr[k + 1]) for k in active])
    block_of = np.repeat(np.arange(active.size), np.diff(prob.gptr)[active])
    nb = active.size
    xa = prob.x[:, idx]
    n = prob.n
    y = prob.y
    pa = pens[active]

    def value(b):
        bn = np.sqrt(np.bincount(block_of, weights=b**2, minlength=nb))
        r = y - xa @ b
        return 0.5 * float(r @ r) / n + float(pa @ bn), bn, r

    b = latent[idx].copy()
    f0, bn, r = value(b)
    moved = False
    for _ in range(_NEWTON_STEPS):
        u = b / bn[block_of]
        scale = (pa / bn)[block_of]
        grad = -(xa.T @ r) / n + pa[block_of] * u

        def hess_vec(v, u=u, scale=scale):
            proj = np.bincount(block_of, weights=u * v, minlength=nb)[block_of]
            return xa.T @ (xa @ v) / n + scale * (v - u * proj)

        op = LinearOperator((idx.size, idx.size), matvec=hess_vec, dtype=float)
        step, _ = cg(op, -grad, rtol=1e-10, atol=0.0, maxiter=_CG_ITERS)
        if not np.isfinite(step).all():
            break
        slope = float(grad @ step)
        if slope >= 0:
            break
        t = 1.0
        while t > 1e-10:
            trial = b + t * step
            f1, bn1, r1 = value(trial)
            if (bn1 > 0).all() and f1 <= f0 + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        b, f0, bn, r = trial, f1, bn1, r1
        moved = True
        if np.abs(t * step).max() < 1e-13 * max(1.0, np.abs(b).max()):
            break
    if moved:
        latent[idx] = b
    return moved


def group_lambda_max(data: Dataset, groups: GroupStructure, scale_by_size: bool = True) -> float:
    """Smallest ``lam`` at which every group is inactive."""
    g = data.x.T @ data.y / data.n_samples
    vals = [np.linalg.norm(g[idx]) / (np.sqrt(idx.size) if scale_by_size else 1.0) for idx in groups]
    return float(max(vals)) * (1.0 + 1e-12)


def _solve(prob: _BlockProblem, lam: float, latent0, tol: float, max_iter: int) -> GroupFitResult:
    if lam <= 0:
        raise ValueError("group lasso needs lam > 0")
    latent = np.zeros(prob.x.shape[1]) if latent0 is None else np.array(latent0, dtype=float)
    pens = lam * prob.weights
    sweeps = 0
    chunk = _POLISH_EVERY
    last = np.inf
    while True:
        budget = min(chunk, int(max_iter) - sweeps)
        used, kkt, status = _kernels.block_cd_group_lasso(
            prob.x, prob.y, prob.gptr, prob.evecs, prob.eptr, prob.evals, pens,
            latent, float(tol), budget,
        )
        sweeps += int(used)
        if status != _kernels.MAX_ITER or sweeps >= max_iter:
            break
        if kkt > _STALL * last and _newton_polish(prob, latent, pens):
            sweeps += 1
        last = kkt
        chunk = min(2 * chunk, 4 * _POLISH_EVERY)
    if status == _kernels.NONFINITE:
        raise NonFiniteError("block coordinate descent produced a non-finite iterate")
    norms = prob.block_norms(latent)
    res = GroupFitResult(
        beta=prob.collapse(latent),
        lam=float(lam),
        active_groups=np.flatnonzero(norms > 0),
        block_kkt_residual=float(kkt),
        iterations=int(sweeps),
        objective=prob.objective(latent, lam),
        latent=latent,
        converged=status == _kernels.CONVERGED,
    )
    if not np.isfinite(res.objective):
        raise NonFiniteError("objective is not finite")
    if status == _kernels.MAX_ITER:
        raise NonConvergenceError(
            f"no convergence after {sweeps} block sweeps (kkt residual {kkt:.3e})", res
        )
    return res


def fit_group_lasso(
    data: Dataset,
    groups: GroupStructure,
    lam: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    scale_by_size: bool = True,
    warm_start=None,
) -> GroupFitResult:
    """Fit the (overlapping) Group Lasso at one tuning parameter.

    ``warm_start`` is a latent coefficient vector from a previous fit on the
    same data and groups (``GroupFitResult.latent``).
    """
    prob = _BlockProblem(data, groups, scale_by_size)
    return _solve(prob, lam, warm_start, tol, max_iter)


@dataclass
class GroupLassoPath:
    grid: np.ndarray
    fits: list
    errors: dict

    @property
    def iterations(self) -> int:
        return sum(f.iterations for f in self.fits if f is not None)


def fit_group_lasso_path(
    data: Dataset,
    groups: GroupStructure,
    grid_size: int = 100,
    lambda_min_ratio: float = 1e-3,
    grid=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    scale_by_size: bool = True,
) -> GroupLassoPath:
    """Warm-started Group Lasso fits along a decreasing grid."""
    prob = _BlockProblem(data, groups, scale_by_size)
    if grid is None:
        grid = lambda_grid(group_lambda_max(data, groups, scale_by_size), grid_size, lambda_min_ratio)
    grid = np.asarray(grid, dtype=float)
    fits: list = []
    errors: dict = {}
    latent = None
    for i, lam in enumerate(grid):
        try:
            fit = _solve(prob, lam, latent, tol, max_iter)
        except NonConvergenceError as err:
            errors[i] = err
            fits.append(None)
            latent = err.result.latent if err.result is not None else latent
            continue
        except (NonFiniteError, ValueError) as err:
            errors[i] = err
            fits.append(None)
            continue
        fits.append(fit)
        latent = fit.latent
    return GroupLassoPath(grid=grid, fits=fits, errors=errors)

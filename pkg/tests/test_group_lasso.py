import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import orthonormal_design, prox_grad_group_lasso
from coadaptive.data import GroupStructure, standardize
from coadaptive.exceptions import NonConvergenceError
from coadaptive.group_lasso import fit_group_lasso, fit_group_lasso_path, group_lambda_max
from coadaptive.solver import fit_weighted_lasso, lambda_grid, lambda_max


def _data(r, n, p, noise=0.5):
    x = r.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(3, p)] = 1.5
    return standardize(x, x @ beta + noise * r.standard_normal(n))


def _objective(ds, groups, beta, lam):
    r = ds.y - ds.x @ beta
    pen = sum(math.sqrt(len(g)) * np.linalg.norm(beta[g]) for g in groups)
    return 0.5 * r @ r / ds.n_samples + lam * pen


def test_all_inactive_at_lambda_max(rng):
    ds = _data(rng, 30, 9)
    groups = GroupStructure.contiguous(9, 3)
    zs = [np.linalg.norm(ds.x[:, g].T @ ds.y / 30) / math.sqrt(3) for g in groups]
    assert group_lambda_max(ds, groups) == pytest.approx(max(zs), rel=1e-10)
    fit = fit_group_lasso(ds, groups, group_lambda_max(ds, groups))
    assert not fit.beta.any()


@pytest.mark.parametrize("seed", range(5))
def test_singletons_equal_lasso(seed):
    r = np.random.default_rng(seed)
    ds = _data(r, 25, 8)
    lam = 0.2 * lambda_max(ds)
    g = fit_group_lasso(ds, GroupStructure.singletons(8), lam, tol=1e-12)
    l = fit_weighted_lasso(ds, None, lam, tol=1e-12)
    np.testing.assert_allclose(g.beta, l.beta, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_orthonormal_blocks_closed_form(seed):
    r = np.random.default_rng(seed)
    x = orthonormal_design(20, 6, r)
    ds = standardize(x, x @ r.standard_normal(6) + r.standard_normal(20))
    groups = GroupStructure.contiguous(6, 3)
    z = ds.x.T @ ds.y / 20
    lam = r.uniform(0.2, 0.9) * group_lambda_max(ds, groups)
    expect = np.zeros(6)
    for g in groups:
        nrm = np.linalg.norm(z[g])
        expect[g] = max(0.0, 1 - lam * math.sqrt(3) / nrm) * z[g]
    # the closed form is checked against the reference solver first
    np.testing.assert_allclose(prox_grad_group_lasso(ds.x, ds.y, list(groups), lam), expect, atol=1e-10)
    fit = fit_group_lasso(ds, groups, lam, tol=1e-13)
    np.testing.assert_allclose(fit.beta, expect, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_two_groups_match_reference(seed):
    r = np.random.default_rng(50 + seed)
    ds = _data(r, 20, 6)
    groups = GroupStructure.contiguous(6, 3)
    lam = r.uniform(0.05, 0.8) * group_lambda_max(ds, groups)
    fit = fit_group_lasso(ds, groups, lam)
    np.testing.assert_allclose(fit.beta, prox_grad_group_lasso(ds.x, ds.y, list(groups), lam), atol=1e-6)


def test_overlapping_matches_latent_reference(rng):
    ds = _data(rng, 30, 7)
    groups = GroupStructure([[0, 1, 2], [2, 3, 4], [4, 5, 6]], 7)
    lam = 0.3 * group_lambda_max(ds, groups)
    fit = fit_group_lasso(ds, groups, lam)
    np.testing.assert_allclose(fit.beta, prox_grad_group_lasso(ds.x, ds.y, list(groups), lam), atol=1e-6)


def test_unscaled_penalty_option(rng):
    ds = _data(rng, 30, 6)
    groups = GroupStructure([[0], [1, 2, 3, 4, 5]], 6)
    lam = 0.3 * group_lambda_max(ds, groups, scale_by_size=False)
    fit = fit_group_lasso(ds, groups, lam, scale_by_size=False)
    ref = prox_grad_group_lasso(ds.x, ds.y, list(groups), lam, scale_by_size=False)
    np.testing.assert_allclose(fit.beta, ref, atol=1e-6)


@given(st.integers(0, 2**31), st.floats(0.01, 0.99))
def test_all_in_all_out(seed, frac):
    r = np.random.default_rng(seed)
    ds = _data(r, 30, 12)
    groups = GroupStructure.contiguous(12, 4)
    fit = fit_group_lasso(ds, groups, frac * group_lambda_max(ds, groups))
    for k, g in enumerate(groups):
        block = fit.beta[g]
        assert (block != 0).all() or (block == 0).all()
        assert (k in fit.active_groups) == bool(np.linalg.norm(block) > 0)
    assert fit.block_kkt_residual <= 1e-8


def test_objective_non_increasing_in_sweeps(rng):
    ds = _data(rng, 30, 40, noise=0.2)
    groups = GroupStructure.contiguous(40, 4)
    lam = 0.01 * group_lambda_max(ds, groups)
    values = []
    for k in range(1, 25):
        try:
            fit = fit_group_lasso(ds, groups, lam, max_iter=k)
        except NonConvergenceError as err:
            fit = err.result
        values.append(_objective(ds, groups, fit.beta, lam))
    assert all(b <= a + 1e-14 for a, b in zip(values, values[1:]))


def test_path_warm_starts(rng):
    ds = _data(rng, 40, 30)
    groups = GroupStructure.contiguous(30, 5)
    path = fit_group_lasso_path(ds, groups, grid_size=15, lambda_min_ratio=0.01)
    assert len(path.fits) == 15 and not path.errors
    assert path.fits[0].active_groups.size == 0
    np.testing.assert_allclose(
        path.grid, lambda_grid(group_lambda_max(ds, groups), 15, 0.01)
    )


def test_group_count_mismatch(rng):
    with pytest.raises(ValueError):
        fit_group_lasso(_data(rng, 20, 6), GroupStructure.contiguous(4, 2), 0.1)

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coadaptive.data import (
    GroupStructure,
    SparsityPattern,
    estimation_error,
    s_tilde,
    standardize,
)
from coadaptive.exceptions import (
    ConstantColumnWarning,
    DimensionMismatchError,
    IndexOutOfRangeError,
)


def test_single_column_hand_arithmetic():
    ds = standardize(np.array([[2.0], [4.0], [6.0]]), np.zeros(3))
    # centered (-2, 0, 2), empirical norm sqrt(8/3)
    expect = np.array([-2.0, 0.0, 2.0]) / math.sqrt(8 / 3)
    np.testing.assert_allclose(ds.x[:, 0], expect, atol=1e-15)
    assert ds.column_scales[0] == pytest.approx(math.sqrt(8 / 3), abs=1e-15)
    assert np.mean(ds.x[:, 0] ** 2) == pytest.approx(1.0, abs=1e-14)


def test_already_standard_is_identity(rng):
    a = rng.standard_normal((30, 4))
    a -= a.mean(axis=0)
    a /= np.sqrt(np.mean(a**2, axis=0))
    ds = standardize(a, rng.standard_normal(30))
    np.testing.assert_allclose(ds.column_scales, 1.0, atol=1e-12)
    np.testing.assert_allclose(ds.x, a, atol=1e-12)


def test_constant_column_flagged_not_dropped(rng):
    x = rng.standard_normal((10, 3))
    x[:, 1] = 5.0
    with pytest.warns(ConstantColumnWarning):
        ds = standardize(x, rng.standard_normal(10))
    assert ds.constant_columns.tolist() == [False, True, False]
    assert ds.n_features == 3
    assert np.mean(ds.x[:, 0] ** 2) == pytest.approx(1.0)


def test_shape_errors():
    with pytest.raises(DimensionMismatchError):
        standardize(np.ones((5, 2)), np.ones(4))
    with pytest.raises(ValueError):
        standardize(np.array([[1.0, np.nan], [2.0, 3.0]]), np.ones(2))


@given(st.integers(3, 20), st.integers(1, 6), st.integers(0, 2**31))
def test_standardize_idempotent(n, p, seed):
    r = np.random.default_rng(seed)
    ds = standardize(r.standard_normal((n, p)) * 3 + 1, r.standard_normal(n))
    again = standardize(ds.x, ds.y)
    np.testing.assert_allclose(again.column_scales, 1.0, atol=1e-10)
    np.testing.assert_allclose(again.x_means, 0.0, atol=1e-10)
    assert abs(again.y_mean) < 1e-10


@given(st.integers(3, 20), st.integers(1, 6), st.integers(0, 2**31))
def test_raw_coefficients_reproduce_fitted_values(n, p, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, p)) * r.uniform(0.1, 10, p) + r.uniform(-5, 5, p)
    y = r.standard_normal(n) + 2
    ds = standardize(x, y)
    beta = r.standard_normal(p)
    coef, icpt = ds.coef_to_raw(beta)
    np.testing.assert_allclose(x @ coef + icpt, ds.x @ beta + ds.y_mean, atol=1e-10)


def test_estimation_error_examples(rng):
    assert estimation_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert estimation_error([1.0, 0.0], [0.0, 1.0]) == 2.0
    a, b = rng.standard_normal(50), rng.standard_normal(50)
    naive = 0.0
    for i in range(50):
        naive += (a[i] - b[i]) ** 2
    assert estimation_error(a, b) == pytest.approx(naive, abs=1e-12)
    with pytest.raises(DimensionMismatchError):
        estimation_error([1.0], [1.0, 2.0])


def test_s_tilde_examples():
    assert s_tilde(GroupStructure([[0, 1], [2, 3]], 4), [0]).tolist() == [0, 1]
    assert s_tilde(GroupStructure([[0, 1, 2], [2, 3, 4]], 5), [2]).tolist() == [0, 1, 2, 3, 4]
    assert s_tilde(GroupStructure([[0, 1], [2, 3]], 4), []).tolist() == []
    with pytest.raises(IndexOutOfRangeError):
        s_tilde(GroupStructure([[0, 1], [2, 3]], 4), [7])


@st.composite
def groups_and_sets(draw):
    p = draw(st.integers(2, 12))
    k = draw(st.integers(1, 5))
    groups = [draw(st.sets(st.integers(0, p - 1), min_size=1, max_size=p)) for _ in range(k)]
    covered = set().union(*groups)
    missing = set(range(p)) - covered
    if missing:
        groups.append(missing)
    a = draw(st.sets(st.integers(0, p - 1), max_size=p))
    b = a | draw(st.sets(st.integers(0, p - 1), max_size=p))
    return GroupStructure([sorted(g) for g in groups], p), sorted(a), sorted(b)


@given(groups_and_sets())
def test_s_tilde_contains_s_and_is_monotone(case):
    groups, a, b = case
    ta, tb = set(s_tilde(groups, a).tolist()), set(s_tilde(groups, b).tolist())
    assert set(a) <= ta
    assert ta <= tb


def test_group_structure_json_is_one_based(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"groups": [[1, 2], [2, 3]]}))
    g = GroupStructure.from_json(path, 3)
    assert [x.tolist() for x in g] == [[0, 1], [1, 2]]
    assert g.overlap_flag
    assert json.loads(g.to_json())["groups"] == [[1, 2], [2, 3]]


def test_group_structure_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        GroupStructure([[0, 0, 1]], 2)
    with pytest.raises(IndexError):
        GroupStructure([[0, 5]], 3)
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"groups": [[0, 1]]}))
    with pytest.raises(IndexError):
        GroupStructure.from_json(path, 2)


def test_sparsity_pattern():
    groups = GroupStructure([[0, 1], [2, 3], [4, 5]], 6)
    pat = SparsityPattern.from_support(groups, [3])
    assert pat.g_cap_s == (1,)
    assert pat.s_tilde.tolist() == [2, 3]

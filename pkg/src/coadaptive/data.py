"""Data model: standardised datasets, group structures and error metrics.

Empirical norms follow ``||v||_n = sqrt(mean(v**2))`` throughout, so a
standardised column has mean zero and ``||x_j||_n == 1``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    ConstantColumnWarning,
    DimensionMismatchError,
    IndexOutOfRangeError,
)

# columns whose empirical norm after centering falls below this are constant
_CONSTANT_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Centered and scaled design/response pair.

    Attributes
    ----------
    x : ndarray of shape (n, p)
        Standardised design (Fortran ordered for column access).
    y : ndarray of shape (n,)
        Centered response.
    column_scales : ndarray of shape (p,)
        Empirical norms of the centered raw columns. Constant columns store 1.
    x_means, y_mean
        Centering offsets of the raw data.
    constant_columns : ndarray of bool, shape (p,)
        Columns with zero variance. They are kept in place and pinned to zero
        by the solvers.
    """

    x: np.ndarray
    y: np.ndarray
    column_scales: np.ndarray
    x_means: np.ndarray
    y_mean: float
    constant_columns: np.ndarray = field(default=None)

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @cached_property
    def col_sq_norms(self) -> np.ndarray:
        """``||x_j||_n^2`` per column (1, or 0 for constant columns)."""
        return _readonly(np.einsum("ij,ij->j", self.x, self.x) / self.x.shape[0])

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def coef_to_raw(self, beta: np.ndarray) -> tuple[np.ndarray, float]:
        """Map standardised-scale coefficients to raw scale, with intercept."""
        beta = np.asarray(beta, dtype=float)
        raw = beta / self.column_scales
        raw = np.where(self.constant_columns, 0.0, raw)
        intercept = float(self.y_mean - self.x_means @ raw)
        return raw, intercept

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Re-standardise a row subset of the *raw* data.

        Used for cross-validation folds. Constant columns of the parent stay
        flagged even if they vary on the subset.
        """
        raw_x, raw_y = self.raw()
        sub = standardize(raw_x[rows], raw_y[rows], _warn=False)
        if self.constant_columns.any():
            const = sub.constant_columns | self.constant_columns
            sub = _replace_constant(sub, const)
        return sub

    def raw(self) -> tuple[np.ndarray, np.ndarray]:
        """Reconstruct the raw design and response."""
        raw_x = self.x * self.column_scales + self.x_means
        return raw_x, self.y + self.y_mean


def _replace_constant(ds: Dataset, const: np.ndarray) -> Dataset:
    x = np.array(ds.x, order="F")
    x[:, const] = 0.0
    scales = np.where(const, 1.0, ds.column_scales)
    return Dataset(
        x=_readonly(x),
        y=ds.y,
        column_scales=_readonly(scales),
        x_means=ds.x_means,
        y_mean=ds.y_mean,
        constant_columns=_readonly(np.asarray(const, dtype=bool)),
    )


def standardize(raw_x, raw_y, *, _warn: bool = True) -> Dataset:
    """Center both X and y and scale every column of X to unit empirical norm.

    Parameters
    ----------
    raw_x : array-like of shape (n, p)
    raw_y : array-like of shape (n,)

    Returns
    -------
    Dataset

    Raises
    ------
    DimensionMismatchError
        If ``len(raw_y) != n`` or the inputs have the wrong rank.
    ValueError
        If ``n < 2`` or the data contain non-finite values.

    Notes
    -----
    Zero-variance columns are flagged (with a ``ConstantColumnWarning``)
    rather than dropped, so column indices and group files stay valid.
    """
    x = np.asarray(raw_x, dtype=float)
    y = np.asarray(raw_y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1:
        raise DimensionMismatchError(
            f"expected 2-d X and 1-d y, got shapes {x.shape} and {y.shape}"
        )
    n, p = x.shape
    if y.shape[0] != n:
        raise DimensionMismatchError(f"X has {n} rows but y has length {y.shape[0]}")
    if n < 2 or p < 1:
        raise ValueError(f"need n >= 2 and p >= 1, got n_samples = {n}, n_features = {p}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("X and y must be finite")

    x_means = x.mean(axis=0)
    xc = x - x_means
    # second centering pass removes the residual mean left by rounding
    xc -= xc.mean(axis=0)
    scales = np.sqrt(np.mean(xc**2, axis=0))
    const = scales <= _CONSTANT_TOL * np.maximum(1.0, np.abs(x_means))
    if const.any():
        if _warn:
            warnings.warn(
                f"constant columns {np.flatnonzero(const).tolist()} are kept but "
                "excluded from fitting",
                ConstantColumnWarning,
                stacklevel=2,
            )
        xc[:, const] = 0.0
        scales = np.where(const, 1.0, scales)
    xs = np.asfortranarray(xc / scales)

    y_mean = float(y.mean())
    yc = y - y_mean
    yc -= yc.mean()

    return Dataset(
        x=_readonly(xs),
        y=_readonly(yc),
        column_scales=_readonly(scales),
        x_means=_readonly(x_means),
        y_mean=y_mean,
        constant_columns=_readonly(const),
    )


def estimation_error(beta_hat, beta_true) -> float:
    """Squared Euclidean distance ``||beta_hat - beta_true||^2``."""
    a = np.asarray(beta_hat, dtype=float)
    b = np.asarray(beta_true, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shapes {a.shape} and {b.shape} differ")
    d = a - b
    return float(d @ d)


class GroupStructure:
    """Ordered collection of (possibly overlapping) column index sets.

    Indices are 0-based internally; :meth:`from_json` and :meth:`to_json`
    convert from and to the 1-based file format.
    """

    def __init__(self, groups: Iterable[Iterable[int]], n_features: int | None = None):
        arrs = []
        for k, g in enumerate(groups):
            a = np.asarray(list(g), dtype=np.int64)
            if a.ndim != 1 or a.size == 0:
                raise ValueError(f"group {k} is empty")
            if np.unique(a).size != a.size:
                raise ValueError(f"group {k} contains duplicate indices")
            arrs.append(_readonly(a))
        if not arrs:
            raise ValueError("at least one group is required")
        flat = np.concatenate(arrs)
        if flat.min() < 0:
            raise IndexOutOfRangeError("negative column index in group structure")
        p = int(flat.max()) + 1 if n_features is None else int(n_features)
        if flat.max() >= p:
            raise IndexOutOfRangeError(
                f"group index {int(flat.max())} out of range for p={p}"
            )
        counts = np.bincount(flat, minlength=p)
        if (counts == 0).any():
            missing = np.flatnonzero(counts == 0)
            raise ValueError(f"groups do not cover columns {missing[:10].tolist()}")
        self._groups = tuple(arrs)
        self._p = p
        self._counts = _readonly(counts)

    @classmethod
    def singletons(cls, n_features: int) -> "GroupStructure":
        return cls(([j] for j in range(n_features)), n_features)

    @classmethod
    def contiguous(cls, n_features: int, group_size: int) -> "GroupStructure":
        if n_features % group_size:
            raise ValueError("n_features must be a multiple of group_size")
        return cls(
            (range(k, k + group_size) for k in range(0, n_features, group_size)),
            n_features,
        )

    @classmethod
    def from_json(cls, path, n_features: int | None = None) -> "GroupStructure":
        """Read ``{"groups": [[1, 2, 3], [4, 5], ...]}`` (1-based indices)."""
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, dict) or "groups" not in doc:
            raise ValueError(f"{path}: expected an object with a 'groups' key")
        groups = []
        for g in doc["groups"]:
            if any(not isinstance(i, int) or i < 1 for i in g):
                raise IndexOutOfRangeError(f"{path}: indices must be integers >= 1")
            groups.append([i - 1 for i in g])
        return cls(groups, n_features)

    def to_json(self) -> str:
        return json.dumps({"groups": [(g + 1).tolist() for g in self._groups]})

    @property
    def groups(self) -> tuple[np.ndarray, ...]:
        return self._groups

    @property
    def n_groups(self) -> int:
        return len(self._groups)

    @property
    def n_features(self) -> int:
        return self._p

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self._groups])

    @property
    def overlap_flag(self) -> bool:
        return bool((self._counts > 1).any())

    def memberships(self) -> list[list[int]]:
        """For each column, the indices of the groups that contain it."""
        out: list[list[int]] = [[] for _ in range(self._p)]
        for k, g in enumerate(self._groups):
            for j in g:
                out[j].append(k)
        return out

    def __len__(self) -> int:
        return len(self._groups)

    def __iter__(self):
        return iter(self._groups)

    def __getitem__(self, k) -> np.ndarray:
        return self._groups[k]

    def __repr__(self) -> str:
        return (
            f"GroupStructure(n_groups={self.n_groups}, n_features={self._p}, "
            f"overlap={self.overlap_flag})"
        )


def _check_index_set(s, p: int) -> np.ndarray:
    s = np.unique(np.asarray(list(s) if not isinstance(s, np.ndarray) else s, dtype=np.int64))
    if s.size and (s.min() < 0 or s.max() >= p):
        raise IndexOutOfRangeError(f"index set {s.tolist()} not within 0..{p - 1}")
    return s


def s_tilde(groups: GroupStructure, s) -> np.ndarray:
    """Union of all groups that intersect ``s`` (sorted, 0-based)."""
    s = _check_index_set(s, groups.n_features)
    if s.size == 0:
        return s
    hit = [g for g in groups if np.intersect1d(g, s, assume_unique=True).size]
    return np.unique(np.concatenate(hit))


@dataclass(frozen=True)
class SparsityPattern:
    """A support ``s`` together with the groups it touches and ``s_tilde``."""

    s: np.ndarray
    g_cap_s: tuple[int, ...]
    s_tilde: np.ndarray
    n_features: int

    @classmethod
    def from_support(cls, groups: GroupStructure, s: Sequence[int] | np.ndarray) -> "SparsityPattern":
        s = _check_index_set(s, groups.n_features)
        touched = tuple(
            k for k, g in enumerate(groups) if np.intersect1d(g, s, assume_unique=True).size
        )
        return cls(
            s=_readonly(s),
            g_cap_s=touched,
            s_tilde=_readonly(s_tilde(groups, s)),
            n_features=groups.n_features,
        )

"""Adaptive and co-adaptive penalty weights from a first-stage estimate.

Every scheme is expressed through per-group quantities ``sqrt(|G|) / ||b_G||``;
the Adaptive Lasso is the special case of singleton groups. A group whose
(trimmed) norm is zero contributes ``inf``, i.e. hard exclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .data import GroupStructure, SparsityPattern
from .exceptions import SchemeGroupMismatchError

SchemeKind = Literal[
    "adaptive",
    "coadaptive_nonoverlap",
    "coadaptive_min",
    "coadaptive_sum",
    "coadaptive_trimmed",
]
SCHEMES = (
    "adaptive",
    "coadaptive_nonoverlap",
    "coadaptive_min",
    "coadaptive_sum",
    "coadaptive_trimmed",
)


@dataclass(frozen=True)
class WeightScheme:
    kind: SchemeKind = "coadaptive_min"
    trim_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown weight scheme {self.kind!r}; choose from {SCHEMES}")
        if self.kind == "coadaptive_trimmed":
            if self.trim_fraction is None or not 0 <= self.trim_fraction < 0.5:
                raise ValueError("coadaptive_trimmed needs trim_fraction in [0, 0.5)")
        elif self.trim_fraction is not None:
            raise ValueError("trim_fraction is only valid for coadaptive_trimmed")

    def check_groups(self, groups: GroupStructure) -> None:
        if self.kind == "coadaptive_nonoverlap" and groups.overlap_flag:
            raise SchemeGroupMismatchError(
                "coadaptive_nonoverlap requires non-overlapping groups; "
                "use coadaptive_min, coadaptive_sum or coadaptive_trimmed"
            )


def group_norms(beta, groups: GroupStructure) -> np.ndarray:
    """Euclidean norm of ``beta`` restricted to each group."""
    beta = np.asarray(beta, dtype=float)
    return np.array([np.linalg.norm(beta[g]) for g in groups])


def _trimmed_sq_norms(beta: np.ndarray, groups: GroupStructure, trim: float) -> np.ndarray:
    out = np.empty(groups.n_groups)
    for k, g in enumerate(groups):
        # trimming discards the largest entries, so a single big coefficient
        # shared through an overlap cannot carry a group on its own
        sq = np.sort(beta[g] ** 2)
        keep = math.ceil((1.0 - trim) * g.size - 1e-12)
        out[k] = sq[:keep].sum()
    return out


def _inverse_group_terms(sq_norms: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(sq_norms > 0, np.sqrt(sizes) / np.sqrt(sq_norms), np.inf)


def compute_weights(beta_initial, groups: GroupStructure, scheme: WeightScheme) -> np.ndarray:
    """Per-covariate penalty weights for the second-stage weighted Lasso.

    ``adaptive`` ignores ``groups`` (beyond its size) and gives ``1/|b_j|``.
    The co-adaptive schemes reduce the per-group terms
    ``sqrt(|G|) / ||b_G||`` over the groups containing each covariate by
    min (``coadaptive_min``, ``coadaptive_trimmed``) or sum
    (``coadaptive_sum``). ``coadaptive_trimmed`` replaces ``||b_G||^2`` by the
    sum of the smallest ``ceil((1 - trim_fraction) |G|)`` squared entries,
    i.e. the top ``trim_fraction`` share of each group is trimmed away.
    """
    beta = np.asarray(beta_initial, dtype=float)
    if beta.shape != (groups.n_features,):
        raise ValueError(
            f"beta_initial has shape {beta.shape}, expected ({groups.n_features},)"
        )
    scheme.check_groups(groups)
    if scheme.kind == "adaptive":
        groups = GroupStructure.singletons(groups.n_features)

    if scheme.kind == "coadaptive_trimmed":
        sq = _trimmed_sq_norms(beta, groups, scheme.trim_fraction)
    else:
        sq = group_norms(beta, groups) ** 2
    terms = _inverse_group_terms(sq, groups.sizes)

    reduce = np.add if scheme.kind == "coadaptive_sum" else np.minimum
    w = np.full(groups.n_features, np.inf if reduce is np.minimum else 0.0)
    for k, g in enumerate(groups):
        w[g] = reduce(w[g], terms[k])
    return w


@dataclass(frozen=True)
class SeparationStats:
    """Extremes of the weights over the index sets used in the second-stage
    error bound. Empty sets give ``inf`` for minima, ``0`` for maxima, and
    set the matching ``*_empty`` flag."""

    w_plus_T: float
    w_minus_Stilde_c: float
    w_minus_Stilde_minus_T: float
    T_empty: bool
    Stilde_c_empty: bool
    Stilde_minus_T_empty: bool


def weight_separation_stats(weights, pattern: SparsityPattern, t=None) -> SeparationStats:
    """Max weight over ``t``, min over the complement of ``s_tilde``, and min
    over ``s_tilde`` minus ``t``. ``t`` defaults to the support ``pattern.s``."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (pattern.n_features,):
        raise ValueError("weights and pattern disagree on the number of features")
    t = pattern.s if t is None else np.unique(np.asarray(t, dtype=np.int64))
    p = pattern.n_features
    in_st = np.zeros(p, dtype=bool)
    in_st[pattern.s_tilde] = True
    in_t = np.zeros(p, dtype=bool)
    in_t[t] = True
    st_c = w[~in_st]
    st_minus_t = w[in_st & ~in_t]
    return SeparationStats(
        w_plus_T=float(w[in_t].max()) if in_t.any() else 0.0,
        w_minus_Stilde_c=float(st_c.min()) if st_c.size else math.inf,
        w_minus_Stilde_minus_T=float(st_minus_t.min()) if st_minus_t.size else math.inf,
        T_empty=not in_t.any(),
        Stilde_c_empty=st_c.size == 0,
        Stilde_minus_T_empty=st_minus_t.size == 0,
    )

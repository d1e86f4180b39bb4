"""Restricted-eigenvalue statistics on small designs.

    phi^2(L, S, m) = min ||X d||_n^2 / ||d_M||^2
        over d, M with M containing S, |M| <= m, ||d_{S^c}||_1 <= L sqrt|S| ||d_S||

    phi^2_G(L, S)  = the same with M ranging over the groups instead.

The ratio is scale invariant, so ``d`` is normalised to ``||d_S|| = 1``;
the cone then becomes an l1 ball of radius ``L sqrt|S|`` for ``d_{S^c}``.
Both projections (unit sphere on ``S``, l1 ball off ``S``) are exact, and
each fixed-``M`` problem is minimised by multi-start projected gradient.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit

from .data import Dataset, GroupStructure, SparsityPattern, _check_index_set
from .exceptions import TooLargeForExactError

EXACT_MAX_P = 12
CHAIN_SLACK = 0.05
_MAX_ITER = 3000
# every start gets _SCOUT_ITER iterations; the _KEEP best are run to convergence
_SCOUT_ITER = 30
_KEEP = 5

Mode = Literal["exact_small", "heuristic"]


@dataclass(frozen=True)
class ReQuery:
    """Cone parameter ``l``, support ``s`` (0-based), set-size cap ``m``
    (``phi^2`` only; defaults to ``|s|``) and ``groups`` (``phi^2_G`` only)."""

    l: float
    s: tuple
    m: int | None = None
    groups: GroupStructure | None = None

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(sorted(int(i) for i in self.s)))
        if not self.l > 0:
            raise ValueError("cone parameter l must be positive")
        if len(self.s) < 1:
            raise ValueError("s must contain at least one index")
        if self.m is not None and self.m < len(self.s):
            raise ValueError("m must be at least |s|")


@dataclass(frozen=True)
class ReEstimate:
    value: float
    certified_upper: float
    mode: Mode
    delta: np.ndarray
    m_set: np.ndarray

    @property
    def certified(self) -> bool:
        return self.mode == "exact_small"


def _gram(data) -> np.ndarray:
    """``X^T X / n`` of a Dataset, or of a design matrix used as given."""
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("design must be two-dimensional")
    return x.T @ x / x.shape[0]


@njit(cache=True)
def _project(d, s_idx, c_idx, rad, out, buf):
    """Write the projection of ``d`` onto {||d_S|| = 1} x {||d_{S^c}||_1 <= rad}
    into ``out``; returns False when ``d_S`` vanishes."""
    nu = 0.0
    for j in s_idx:
        nu += d[j] * d[j]
    nu = np.sqrt(nu)
    if nu == 0.0 or not np.isfinite(nu):
        return False
    for j in s_idx:
        out[j] = d[j] / nu
    k = c_idx.size
    l1 = 0.0
    for i in range(k):
        l1 += abs(d[c_idx[i]])
    if l1 <= rad:
        for j in c_idx:
            out[j] = d[j]
        return True
    for i in range(k):
        buf[i] = abs(d[c_idx[i]])
    mu = np.sort(buf[:k])
    cs = 0.0
    theta = 0.0
    for i in range(k - 1, -1, -1):
        cs += mu[i]
        t = (cs - rad) / (k - i)
        if mu[i] > t:
            theta = t
    for j in c_idx:
        r = abs(d[j]) - theta
        out[j] = np.sign(d[j]) * r if r > 0.0 else 0.0
    return True


@njit(cache=True)
def _ratio(sig, d, s_idx, c_idx, mask, k_top, dm, sd, buf):
    """Objective at ``d``; fills ``dm`` with the normalising set used and
    ``sd`` with ``sig @ d``. Returns (ratio, denominator)."""
    p = d.size
    num = 0.0
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc += sig[i, j] * d[j]
        sd[i] = acc
        num += d[i] * acc
    if k_top < 0:
        dm[:] = mask
    else:
        dm[:] = False
        for j in s_idx:
            dm[j] = True
        if k_top > 0 and c_idx.size:
            for i in range(c_idx.size):
                buf[i] = -abs(d[c_idx[i]])
            order = np.argsort(buf[:c_idx.size])
            for i in range(min(k_top, c_idx.size)):
                dm[c_idx[order[i]]] = True
    den = 0.0
    for j in range(p):
        if dm[j]:
            den += d[j] * d[j]
    if den <= 0.0:
        return np.inf, den
    return num / den, den


@njit(cache=True)
def _descend(sig, d, s_idx, c_idx, mask, k_top, rad, max_iter, dm, sd, work):
    """Projected gradient with backtracking from a feasible ``d`` (updated in
    place, with ``dm``/``sd`` kept in sync). Returns the final ratio."""
    p = d.size
    trial, step, g, st_sd, buf = work[0], work[1], work[2], work[3], work[4]
    tm = np.zeros(p, dtype=np.bool_)
    r, den = _ratio(sig, d, s_idx, c_idx, mask, k_top, dm, sd, buf)
    if not np.isfinite(r):
        return r
    eta = 1.0
    for _ in range(max_iter):
        for j in range(p):
            g[j] = 2.0 * (sd[j] - (r * d[j] if dm[j] else 0.0)) / den
        accepted = False
        rt = r
        dt = den
        step2 = 0.0
        while eta > 1e-14:
            for j in range(p):
                step[j] = d[j] - eta * g[j]
            if _project(step, s_idx, c_idx, rad, trial, buf):
                rt, dt = _ratio(sig, trial, s_idx, c_idx, mask, k_top, tm, st_sd, buf)
                step2 = 0.0
                for j in range(p):
                    step2 += (trial[j] - d[j]) ** 2
                if rt <= r - 1e-4 * step2 / eta:
                    accepted = True
                    break
            eta *= 0.5
        if not accepted:
            break
        gain = r - rt
        d[:] = trial
        sd[:] = st_sd
        dm[:] = tm
        r = rt
        den = dt
        eta *= 2.0
        if step2 < 1e-24 or gain <= 1e-13 * max(abs(r), 1e-300):
            break
    return r


@njit(cache=True)
def _pg_min(sig, s_idx, c_idx, mask, k_top, rad, starts, max_iter, scout_iter, n_keep):
    """Multi-start projected gradient. Every start gets ``scout_iter``
    iterations; the ``n_keep`` best then run to convergence.
    Returns (best value, best d, its normalising set)."""
    p = sig.shape[0]
    ns = starts.shape[0]
    ds = np.zeros((ns, p))
    vals = np.full(ns, np.inf)
    dm = np.zeros(p, dtype=np.bool_)
    sd = np.zeros(p)
    work = np.zeros((5, p))
    for st in range(ns):
        d = ds[st]
        if not _project(starts[st], s_idx, c_idx, rad, d, work[4]):
            continue
        vals[st] = _descend(sig, d, s_idx, c_idx, mask, k_top, rad, scout_iter, dm, sd, work)
    order = np.argsort(vals)
    best = np.inf
    best_d = np.zeros(p)
    best_m = np.zeros(p, dtype=np.bool_)
    for i in range(min(n_keep, ns)):
        st = order[i]
        if not np.isfinite(vals[st]):
            break
        d = ds[st]
        r = _descend(sig, d, s_idx, c_idx, mask, k_top, rad, max_iter, dm, sd, work)
        if r < best:
            best = r
            best_d[:] = d
            best_m[:] = dm
    return best, best_d, best_m


def _starts(sig: np.ndarray, mask, n_starts: int, rng) -> np.ndarray:
    """Random starts plus eigenvector starts: the bottom eigenvector of the
    Gram matrix and of its Schur complement onto ``mask``."""
    p = sig.shape[0]
    rows = [rng.standard_normal((n_starts, p))]
    w, v = np.linalg.eigh(sig)
    rows.append(v[:, :1].T)
    if mask is not None and 0 < mask.sum() < p:
        m, c = np.flatnonzero(mask), np.flatnonzero(~mask)
        coupling = np.linalg.pinv(sig[np.ix_(c, c)]) @ sig[np.ix_(c, m)]
        schur = sig[np.ix_(m, m)] - sig[np.ix_(m, c)] @ coupling
        _, vs = np.linalg.eigh((schur + schur.T) / 2)
        d = np.zeros(p)
        d[m] = vs[:, 0]
        d[c] = -coupling @ vs[:, 0]
        rows.append(d[None, :])
    return np.ascontiguousarray(np.vstack(rows))


class _Problem:
    def __init__(self, data, s, l, n_starts, seed):
        self.sig = np.ascontiguousarray(_gram(data))
        self.p = self.sig.shape[0]
        self.s = _check_index_set(s, self.p)
        if self.s.size < 1:
            raise ValueError("s must contain at least one index")
        s_mask = np.zeros(self.p, dtype=bool)
        s_mask[self.s] = True
        self.s_mask = s_mask
        self.c = np.flatnonzero(~s_mask)
        self.rad = float(l) * math.sqrt(self.s.size)
        self.n_starts = n_starts
        self.rng = np.random.default_rng(seed)

    def run(self, mask, k_top=-1):
        starts = _starts(self.sig, mask, self.n_starts, self.rng)
        m = np.zeros(self.p, dtype=bool) if mask is None else mask
        return _pg_min(
            self.sig, self.s, self.c, m, k_top, self.rad, starts, _MAX_ITER, _SCOUT_ITER, _KEEP
        )


def _resolve_mode(p: int, mode: str) -> Mode:
    if mode == "auto":
        return "exact_small" if p <= EXACT_MAX_P else "heuristic"
    if mode == "exact_small":
        if p > EXACT_MAX_P:
            raise TooLargeForExactError(
                f"exact mode enumerates candidate sets and is limited to p <= {EXACT_MAX_P}; got p = {p}"
            )
        return mode
    if mode == "heuristic":
        return mode
    raise ValueError(f"unknown mode {mode!r}")


def _estimate(best, mode) -> ReEstimate:
    value, d, mset = best
    value = max(float(value), 0.0)
    return ReEstimate(value, value, mode, d, np.flatnonzero(mset))


def re_statistic(data, q: ReQuery, mode: str = "auto", n_starts: int = 50, seed: int = 0) -> ReEstimate:
    """``phi^2(L, S, m)``.

    ``exact_small`` (default for ``p <= 12``) enumerates every ``M``
    containing ``S`` with ``|M| = min(m, p)``, which suffices because the
    denominator only grows with ``M``. ``heuristic`` lets ``M`` follow the
    largest off-support entries of the iterate. Either way the returned
    value is attained by the reported ``delta``, so it is an upper bound on
    the true minimum.
    """
    prob = _Problem(data, q.s, q.l, n_starts, seed)
    mode = _resolve_mode(prob.p, mode)
    m = min(prob.p, q.m if q.m is not None else prob.s.size)
    k = m - prob.s.size
    best = prob.run(None, k_top=k)
    if mode == "exact_small":
        for extra in itertools.combinations(prob.c.tolist(), k):
            mask = prob.s_mask.copy()
            mask[list(extra)] = True
            cand = prob.run(mask)
            if cand[0] < best[0]:
                best = cand
    return _estimate(best, mode)


def group_re_statistic(data, q: ReQuery, mode: str = "auto", n_starts: int = 50, seed: int = 0) -> ReEstimate:
    """``phi^2_G(L, S)``: the normalising set ranges over the groups of
    ``q.groups``. Every group is tried; the mode only records whether the
    per-group minimisation is trusted as exact."""
    if q.groups is None:
        raise ValueError("group_re_statistic needs q.groups")
    prob = _Problem(data, q.s, q.l, n_starts, seed)
    if q.groups.n_features != prob.p:
        raise ValueError("groups and design disagree on the number of features")
    mode = _resolve_mode(prob.p, mode)
    best = (np.inf, np.zeros(prob.p), np.zeros(prob.p, dtype=bool))
    for g in q.groups:
        mask = np.zeros(prob.p, dtype=bool)
        mask[g] = True
        cand = prob.run(mask)
        if cand[0] < best[0]:
            best = cand
    return _estimate(best, mode)


def greedy_cover(groups: GroupStructure, s) -> list[int]:
    """Indices of groups covering ``s``, picked greedily by how many
    uncovered elements each adds (ties to the lowest index)."""
    left = set(int(i) for i in s)
    chosen = []
    while left:
        gains = [len(left.intersection(g.tolist())) for g in groups]
        k = int(np.argmax(gains))
        if gains[k] == 0:
            raise ValueError("groups do not cover s")
        chosen.append(k)
        left -= set(groups[k].tolist())
    return chosen


@dataclass(frozen=True)
class LemmaChainReport:
    """``cover_phi2 >= phi2_group >= min_group_phi2 >= phi2_lower`` with
    ``cover_phi2 = |H| phi^2(L,S)`` and ``phi2_lower = phi^2(L,S)/(1+L^2|S|)``."""

    cover_phi2: float
    phi2_group: float
    min_group_phi2: float
    phi2_lower: float
    phi2: float
    cover_size: int
    holds: tuple
    slack: float = CHAIN_SLACK

    @property
    def values(self) -> tuple:
        return (self.cover_phi2, self.phi2_group, self.min_group_phi2, self.phi2_lower)

    @property
    def passed(self) -> bool:
        return all(self.holds)


def _geq(a: float, b: float, slack: float) -> bool:
    return a * (1.0 + slack) >= b - 1e-12


def check_lemma_chain(data, groups: GroupStructure, s, l: float, mode: str = "exact_small",
                      n_starts: int = 50, seed: int = 0) -> LemmaChainReport:
    """Evaluate the four terms of the group restricted-eigenvalue inequality
    chain and test each link with a multiplicative slack of 5%."""
    s = tuple(sorted(int(i) for i in s))
    base = ReQuery(l, s)
    phi2 = re_statistic(data, base, mode, n_starts, seed).value
    phi2_g = group_re_statistic(data, ReQuery(l, s, groups=groups), mode, n_starts, seed).value
    p = groups.n_features
    per_size = {}
    for size in sorted(set(groups.sizes.tolist())):
        m = min(len(s) + size, p)
        per_size[size] = re_statistic(data, ReQuery(l, s, m=m), mode, n_starts, seed).value
    min_g = min(per_size.values())
    h = len(greedy_cover(groups, s))
    cover = h * phi2
    lower = phi2 / (1.0 + l * l * len(s))
    holds = (
        _geq(cover, phi2_g, CHAIN_SLACK),
        _geq(phi2_g, min_g, CHAIN_SLACK),
        _geq(min_g, lower, CHAIN_SLACK),
    )
    return LemmaChainReport(cover, phi2_g, min_g, lower, phi2, h, holds)


@dataclass(frozen=True)
class ConditionReport:
    phi2_a1: float
    phi2_g_a2: float
    b2_ratio: float
    l1_0: float
    c2_cone: float | None
    mode: Mode
    b2_infinite: bool
    l1_0_undefined: bool

    def to_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            return v if math.isfinite(v) else str(v)

        return {
            "phi2_3_S": num(self.phi2_a1),
            "phi2_group_3_S": num(self.phi2_g_a2),
            "b2_ratio": num(self.b2_ratio),
            "l1_0": num(self.l1_0),
            "c2_cone": num(self.c2_cone),
            "mode": self.mode,
            "certified": self.mode == "exact_small",
            "b2_infinite": self.b2_infinite,
            "l1_0_undefined": self.l1_0_undefined,
        }


def condition_report(data, groups: GroupStructure, s, beta, sigma: float, gamma1: float,
                     gamma2: float, t=None, delta: float = 1.0, mode: str = "auto",
                     n_starts: int = 50, seed: int = 0) -> ConditionReport:
    """Raw values behind the first- and second-stage conditions.

    Reports ``phi^2(3, S)``, ``phi^2_G(3, S)``, the B2 ratio
    ``max_G sigma^2 |S| log(p) |G|^g1 / (n max(||b_G||^2, min_H ||b_H||^2))``
    (``H`` over groups meeting ``S``), and
    ``L1_0 = max sqrt(|G| / (|H|^(1+g1) n^g2))`` over groups ``G`` meeting
    ``S`` and ``H`` disjoint from it. With ``t`` given, also the second-stage
    cone parameter ``max(delta L1_0, max 2(1+delta) r_H / r_G)`` with
    ``r = ||b_G|| / sqrt|G|``, ``G`` meeting ``S``, ``H`` meeting
    ``S_tilde \\ t``. No pass/fail is attached: the conditions are asymptotic.
    """
    x = data.x if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n, p = x.shape
    beta = np.asarray(beta, dtype=float)
    pattern = SparsityPattern.from_support(groups, s)
    s = pattern.s
    phi = re_statistic(data, ReQuery(3.0, s), mode, n_starts, seed)
    phi_g = group_re_statistic(data, ReQuery(3.0, s, groups=groups), mode, n_starts, seed)

    s_set = set(s.tolist())
    meets = np.array([bool(s_set.intersection(g.tolist())) for g in groups])
    norms2 = np.array([float(beta[g] @ beta[g]) for g in groups])
    sizes = groups.sizes.astype(float)
    min_h = norms2[meets].min() if meets.any() else 0.0
    den = n * np.maximum(norms2, min_h)
    with np.errstate(divide="ignore"):
        ratios = np.where(
            den > 0, sigma**2 * s.size * math.log(p) * sizes**gamma1 / np.where(den > 0, den, 1), np.inf
        )
    b2 = float(ratios.max())

    if meets.any() and (~meets).any():
        gmax = sizes[meets].max()
        hmin = sizes[~meets].min()
        l10 = math.sqrt(gmax / (hmin ** (1 + gamma1) * n**gamma2))
    else:
        l10 = math.nan

    c2 = None
    if t is not None:
        t = _check_index_set(t, p)
        rest = set(pattern.s_tilde.tolist()) - set(t.tolist())
        meets_rest = np.array([bool(rest.intersection(g.tolist())) for g in groups])
        r = np.sqrt(norms2) / np.sqrt(sizes)
        base = delta * l10 if math.isfinite(l10) else 0.0
        if meets_rest.any() and meets.any():
            rg = r[meets].min()
            ratio = r[meets_rest].max() / rg if rg > 0 else math.inf
            c2 = max(base, 2 * (1 + delta) * ratio)
        else:
            c2 = base
    return ConditionReport(
        phi2_a1=phi.value,
        phi2_g_a2=phi_g.value,
        b2_ratio=b2,
        l1_0=l10,
        c2_cone=c2,
        mode=phi.mode,
        b2_infinite=not math.isfinite(b2),
        l1_0_undefined=not math.isfinite(l10),
    )

"""Compiled inner loops for the coordinate and block coordinate descent solvers.

Status codes returned by the kernels: 0 converged, 1 hit ``max_sweeps``,
2 non-finite iterate.
"""

import numpy as np
from numba import njit

CONVERGED = 0
MAX_ITER = 1
NONFINITE = 2

# reassociation lets the dot products vectorise; inf/nan semantics are kept
_FM = {"reassoc", "contract"}


@njit(cache=True, fastmath=_FM)
def _soft(z, g):
    if z > g:
        return z - g
    if z < -g:
        return z + g
    return 0.0


@njit(cache=True, fastmath=_FM)
def _residual(X, y, beta):
    n, p = X.shape
    r = y.copy()
    for j in range(p):
        b = beta[j]
        if b != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * b
    return r


@njit(cache=True, fastmath=_FM)
def _coord_violation(g, b, thr):
    if b > 0.0:
        return abs(g - thr)
    if b < 0.0:
        return abs(g + thr)
    v = abs(g) - thr
    return v if v > 0.0 else 0.0


@njit(cache=True, fastmath=_FM)
def cd_weighted_lasso(X, y, colsq, thr, beta, tol, max_sweeps):
    """Active-set cyclic coordinate descent for

        0.5 * ||y - X b||_n^2 + sum_j thr_j |b_j|

    ``colsq`` holds ``||x_j||_n^2``. ``thr`` may hold ``inf`` (coordinate
    pinned at zero). ``beta`` is updated in place. Returns
    (sweeps, kkt_residual, status).
    """
    n, p = X.shape
    usable = np.empty(p, dtype=np.bool_)
    for j in range(p):
        usable[j] = np.isfinite(thr[j]) and colsq[j] > 0.0
        if not usable[j]:
            beta[j] = 0.0

    in_ws = np.zeros(p, dtype=np.bool_)
    ws = np.empty(p, dtype=np.int64)
    nws = 0
    for j in range(p):
        if beta[j] != 0.0:
            in_ws[j] = True
            ws[nws] = j
            nws += 1

    sweeps = 0
    kkt = np.inf
    status = MAX_ITER
    while True:
        # full pass: exact residual, KKT over every usable coordinate
        r = _residual(X, y, beta)
        kkt = 0.0
        for j in range(p):
            if not usable[j]:
                continue
            g = 0.0
            for i in range(n):
                g += X[i, j] * r[i]
            g /= n
            v = _coord_violation(g, beta[j], thr[j])
            if v > kkt:
                kkt = v
            if not in_ws[j] and abs(g) > thr[j]:
                in_ws[j] = True
                ws[nws] = j
                nws += 1
        sweeps += 1
        if not np.isfinite(kkt):
            status = NONFINITE
            break
        if kkt <= tol:
            status = CONVERGED
            break
        if sweeps >= max_sweeps:
            break

        while sweeps < max_sweeps:
            sweeps += 1
            worst = 0.0
            for k in range(nws):
                j = ws[k]
                g = 0.0
                for i in range(n):
                    g += X[i, j] * r[i]
                g /= n
                b = beta[j]
                v = _coord_violation(g, b, thr[j])
                if v > worst:
                    worst = v
                new = _soft(g + colsq[j] * b, thr[j]) / colsq[j]
                if new != b:
                    d = new - b
                    for i in range(n):
                        r[i] -= d * X[i, j]
                    beta[j] = new
            if not np.isfinite(worst):
                break
            if worst <= 0.5 * tol:
                break
    return sweeps, kkt, status


@njit(cache=True, fastmath=_FM)
def _block_solve(a, d, pen, m):
    """Root t > 0 of sum_i a_i^2 / (d_i t + pen)^2 = 1.

    Safeguarded Newton on f(t) = S(t)^(-1/2) - 1, which is increasing in t.
    """
    anorm = 0.0
    dmax = 0.0
    dmin = np.inf
    for i in range(m):
        anorm += a[i] * a[i]
        if d[i] > dmax:
            dmax = d[i]
        if d[i] < dmin:
            dmin = d[i]
    anorm = np.sqrt(anorm)
    lo = (anorm - pen) / dmax
    if dmin > 1e-14 * dmax:
        hi = (anorm - pen) / dmin
    else:
        hi = 2.0 * lo
        for _ in range(200):
            s = 0.0
            for i in range(m):
                q = d[i] * hi + pen
                s += a[i] * a[i] / (q * q)
            if s <= 1.0:
                break
            hi *= 2.0
    t = lo
    for _ in range(200):
        s = 0.0
        ds = 0.0
        for i in range(m):
            q = d[i] * t + pen
            aa = a[i] * a[i]
            s += aa / (q * q)
            ds += -2.0 * aa * d[i] / (q * q * q)
        f = 1.0 / np.sqrt(s) - 1.0
        if f < 0.0:
            lo = t
        else:
            hi = t
        fp = -0.5 * ds / (s * np.sqrt(s))
        if fp > 0.0:
            t_new = t - f / fp
        else:
            t_new = 0.5 * (lo + hi)
        if t_new <= lo or t_new >= hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * t:
            t = t_new
            break
        t = t_new
    return t


@njit(cache=True, fastmath=_FM)
def _block_grad(X, r, gptr, k, n):
    m = gptr[k + 1] - gptr[k]
    g = np.empty(m)
    for c in range(m):
        j = gptr[k] + c
        s = 0.0
        for i in range(n):
            s += X[i, j] * r[i]
        g[c] = s / n
    return g


@njit(cache=True, fastmath=_FM)
def _block_violation(g, beta, start, m, pen):
    bn = 0.0
    for c in range(m):
        bn += beta[start + c] ** 2
    bn = np.sqrt(bn)
    if bn == 0.0:
        gn = 0.0
        for c in range(m):
            gn += g[c] * g[c]
        v = np.sqrt(gn) - pen
        return v if v > 0.0 else 0.0
    v = 0.0
    for c in range(m):
        e = g[c] - pen * beta[start + c] / bn
        v += e * e
    return np.sqrt(v)


@njit(cache=True, fastmath=_FM)
def block_cd_group_lasso(X, y, gptr, evecs, eptr, evals, pens, beta, tol, max_sweeps):
    """Active-set block coordinate descent for

        0.5 * ||y - X b||_n^2 + sum_k pens_k ||b_{G_k}||

    with groups laid out as contiguous column ranges ``gptr[k]:gptr[k+1]``.
    ``evecs``/``evals`` hold the eigendecomposition of each block Gram
    ``X_G^T X_G / n`` (row-major, flattened), so every block update is an
    exact minimisation. Returns (sweeps, block_kkt_residual, status).
    """
    n = X.shape[0]
    q = gptr.shape[0] - 1
    in_ws = np.zeros(q, dtype=np.bool_)
    ws = np.empty(q, dtype=np.int64)
    nws = 0
    for k in range(q):
        for j in range(gptr[k], gptr[k + 1]):
            if beta[j] != 0.0:
                in_ws[k] = True
        if in_ws[k]:
            ws[nws] = k
            nws += 1

    sweeps = 0
    kkt = np.inf
    status = MAX_ITER
    while True:
        r = _residual(X, y, beta)
        kkt = 0.0
        for k in range(q):
            m = gptr[k + 1] - gptr[k]
            g = _block_grad(X, r, gptr, k, n)
            v = _block_violation(g, beta, gptr[k], m, pens[k])
            if v > kkt:
                kkt = v
            if not in_ws[k] and v > 0.0:
                in_ws[k] = True
                ws[nws] = k
                nws += 1
        sweeps += 1
        if not np.isfinite(kkt):
            status = NONFINITE
            break
        if kkt <= tol:
            status = CONVERGED
            break
        if sweeps >= max_sweeps:
            break

        while sweeps < max_sweeps:
            sweeps += 1
            worst = 0.0
            for w in range(nws):
                k = ws[w]
                start = gptr[k]
                m = gptr[k + 1] - start
                g = _block_grad(X, r, gptr, k, n)
                v = _block_violation(g, beta, start, m, pens[k])
                if v > worst:
                    worst = v
                eo = eptr[k]
                # a = Q^T c with c = g + Gram_G beta_G = g + Q diag(d) Q^T beta_G
                a = np.zeros(m)
                for i in range(m):
                    qg = 0.0
                    qb = 0.0
                    for c in range(m):
                        qic = evecs[eo + c * m + i]
                        qg += qic * g[c]
                        qb += qic * beta[start + c]
                    a[i] = qg + evals[start + i] * qb
                anorm = 0.0
                for i in range(m):
                    anorm += a[i] * a[i]
                anorm = np.sqrt(anorm)
                new = np.zeros(m)
                if anorm > pens[k]:
                    dk = evals[start:start + m]
                    t = _block_solve(a, dk, pens[k], m)
                    coef = np.empty(m)
                    for i in range(m):
                        coef[i] = a[i] * t / (dk[i] * t + pens[k])
                    for c in range(m):
                        s = 0.0
                        for i in range(m):
                            s += evecs[eo + c * m + i] * coef[i]
                        new[c] = s
                for c in range(m):
                    j = start + c
                    dlt = new[c] - beta[j]
                    if dlt != 0.0:
                        for i in range(n):
                            r[i] -= dlt * X[i, j]
                        beta[j] = new[c]
            if not np.isfinite(worst):
                break
            if worst <= 0.5 * tol:
                break
    return sweeps, kkt, status

"""Reference implementations used only by the tests.

They share no code with the package: plain numpy proximal gradient for the
penalised problems, a convex QP for the one-point restricted eigenvalue, and
brute-force random search over the cone.
"""

import math

import numpy as np


def _fista(grad, prox, obj, x0, step, tol, max_iter):
    x = x0.copy()
    z = x0.copy()
    t = 1.0
    f_old = obj(x)
    for _ in range(max_iter):
        x_new = prox(z - step * grad(z), step)
        f_new = obj(x_new)
        if f_new > f_old:  # adaptive restart keeps the iteration monotone
            z = x.copy()
            t = 1.0
            x_new = prox(z - step * grad(z), step)
            f_new = obj(x_new)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = x_new + (t - 1) / t_new * (x_new - x)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new
        x, t, f_old = x_new, t_new, f_new
    return x


def prox_grad_lasso(x, y, w, lam, tol=1e-12, max_iter=500_000):
    """argmin 0.5 ||y - x b||^2 / n + lam sum w_j |b_j|; w_j = inf drops column j."""
    n, p = x.shape
    w = np.asarray(w, dtype=float)
    keep = np.isfinite(w)
    xs = x[:, keep]
    ws = w[keep]
    if xs.shape[1] == 0:
        return np.zeros(p)
    gram = xs.T @ xs / n
    xty = xs.T @ y / n
    step = 1.0 / np.linalg.eigvalsh(gram)[-1]

    def grad(b):
        return gram @ b - xty

    def prox(v, s):
        return np.sign(v) * np.maximum(np.abs(v) - s * lam * ws, 0.0)

    def obj(b):
        r = y - xs @ b
        return 0.5 * r @ r / n + lam * np.sum(ws * np.abs(b))

    out = np.zeros(p)
    out[keep] = _fista(grad, prox, obj, np.zeros(xs.shape[1]), step, tol, max_iter)
    return out


def prox_grad_group_lasso(x, y, groups, lam, scale_by_size=True, tol=1e-12, max_iter=500_000):
    """Latent group lasso: b = sum_G v_G, penalty lam sum_G c_G ||v_G||.

    For disjoint groups this is the ordinary group lasso."""
    n, p = x.shape
    cols = np.concatenate([np.asarray(g) for g in groups])
    bounds = np.cumsum([0] + [len(g) for g in groups])
    c = np.array([math.sqrt(len(g)) if scale_by_size else 1.0 for g in groups])
    xl = x[:, cols]
    gram = xl.T @ xl / n
    xty = xl.T @ y / n
    step = 1.0 / np.linalg.eigvalsh(gram)[-1]

    def grad(v):
        return gram @ v - xty

    def prox(v, s):
        out = v.copy()
        for k in range(len(groups)):
            a, b = bounds[k], bounds[k + 1]
            nrm = np.linalg.norm(v[a:b])
            shrink = max(0.0, 1.0 - s * lam * c[k] / nrm) if nrm > 0 else 0.0
            out[a:b] = shrink * v[a:b]
        return out

    def obj(v):
        r = y - xl @ v
        pen = sum(c[k] * np.linalg.norm(v[bounds[k]:bounds[k + 1]]) for k in range(len(groups)))
        return 0.5 * r @ r / n + lam * pen

    v = _fista(grad, prox, obj, np.zeros(cols.size), step, tol, max_iter)
    return np.bincount(cols, weights=v, minlength=p)


def lasso_kkt_violation(x, y, w, lam, beta):
    """Largest violation of the subgradient conditions, computed from scratch."""
    n = x.shape[0]
    g = x.T @ (y - x @ beta) / n
    worst = 0.0
    for j in range(x.shape[1]):
        if not np.isfinite(w[j]):
            worst = max(worst, abs(beta[j]))
            continue
        t = lam * w[j]
        if beta[j] != 0:
            worst = max(worst, abs(g[j] - t * np.sign(beta[j])))
        else:
            worst = max(worst, abs(g[j]) - t)
    return worst


def orthonormal_design(n, p, rng):
    """Centered design with x^T x / n = I."""
    a = rng.standard_normal((n, p))
    a -= a.mean(axis=0)
    q, _ = np.linalg.qr(a)
    return q * math.sqrt(n)


def unit_column_design(n, p, rng):
    """Gaussian design, centered, every column with ||x_j||^2 = n."""
    a = rng.standard_normal((n, p))
    a -= a.mean(axis=0)
    return a / np.linalg.norm(a, axis=0) * math.sqrt(n)


def re_single_qp(x, s, l):
    """Exact phi^2(l, {s}, 1) as a convex QP.

    With one support index the normalisation ||d_S|| = 1 fixes d_s = +-1 and
    by symmetry d_s = 1, leaving min d' G d subject to ||d_{-s}||_1 <= l.
    """
    import cvxpy as cp

    n, p = x.shape
    gram = x.T @ x / n
    gram = (gram + gram.T) / 2
    d = cp.Variable(p)
    others = [j for j in range(p) if j != s]
    cons = [d[s] == 1, cp.norm1(d[others]) <= l]
    prob = cp.Problem(cp.Minimize(cp.quad_form(d, cp.psd_wrap(gram))), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(prob.value)


def re_random_search(x, s, l, m, n_dirs, rng):
    """Upper bound on phi^2(l, S, m): best ratio over random cone directions,
    with M = S plus the m - |S| largest off-support entries."""
    n, p = x.shape
    s = np.asarray(sorted(s))
    c = np.setdiff1d(np.arange(p), s)
    gram = x.T @ x / n
    rad = l * math.sqrt(s.size)
    ds = rng.standard_normal((n_dirs, s.size))
    ds /= np.linalg.norm(ds, axis=1, keepdims=True)
    # off-support part: random direction scaled to a random fraction of the l1 radius
    dc = rng.standard_normal((n_dirs, c.size)) * rng.exponential(size=(n_dirs, c.size))
    dc /= np.maximum(np.abs(dc).sum(axis=1, keepdims=True), 1e-300)
    dc *= rad * rng.uniform(0, 1, size=(n_dirs, 1)) ** 0.3
    d = np.zeros((n_dirs, p))
    d[:, s] = ds
    d[:, c] = dc
    num = np.einsum("ij,jk,ik->i", d, gram, d)
    k = m - s.size
    extra = np.sort(dc**2, axis=1)[:, ::-1][:, :k].sum(axis=1) if k > 0 else 0.0
    return float(np.min(num / (1.0 + extra)))

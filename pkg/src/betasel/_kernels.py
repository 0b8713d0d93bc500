"""Compiled likelihood, score, information and BFGS kernels.

All kernels take a per-row weight vector ``w``: ones for an ordinary sample,
resampling counts for a case-resampled bootstrap sample, and a 0/1 mask for a
held-out subset. ``ly``/``l1y``/``ys`` are ``log y``, ``log(1 - y)`` and the
logit of ``y``, precomputed once per response vector.
"""
import math

import numpy as np
from numba import njit

from .links import IDENTITY, _linkinv, _mu_eta
from .special import _digamma, _trigamma

SIG_EPS = 1e-12


@njit(cache=True, nogil=True)
def _predictors(theta, X, Z, t):
    r = X.shape[1]
    eta = 0.0
    for j in range(r):
        eta += X[t, j] * theta[j]
    nu = 0.0
    for j in range(Z.shape[1]):
        nu += Z[t, j] * theta[r + j]
    return eta, nu


@njit(cache=True, nogil=True)
def _sigma(dl, nu):
    if dl == IDENTITY:
        if not (nu > 0.0 and nu < 1.0):
            return math.nan
        return min(max(nu, SIG_EPS), 1.0 - SIG_EPS)
    return _linkinv(dl, nu)


@njit(cache=True, nogil=True)
def logdens_obs(theta, y, ly, l1y, X, Z, ml, dl, out):
    for t in range(y.size):
        eta, nu = _predictors(theta, X, Z, t)
        mu = _linkinv(ml, eta)
        sig = _sigma(dl, nu)
        if math.isnan(sig):
            out[t] = -math.inf
            continue
        phi = 1.0 / (sig * sig) - 1.0
        p = mu * phi
        q = (1.0 - mu) * phi
        out[t] = (math.lgamma(phi) - math.lgamma(p) - math.lgamma(q)
                  + (p - 1.0) * ly[t] + (q - 1.0) * l1y[t])


@njit(cache=True, nogil=True)
def negloglik(theta, w, y, ly, l1y, X, Z, ml, dl):
    total = 0.0
    for t in range(y.size):
        if w[t] == 0.0:
            continue
        eta, nu = _predictors(theta, X, Z, t)
        mu = _linkinv(ml, eta)
        sig = _sigma(dl, nu)
        if math.isnan(sig):
            return math.inf
        phi = 1.0 / (sig * sig) - 1.0
        p = mu * phi
        q = (1.0 - mu) * phi
        total += w[t] * (math.lgamma(phi) - math.lgamma(p) - math.lgamma(q)
                         + (p - 1.0) * ly[t] + (q - 1.0) * l1y[t])
    if not math.isfinite(total):
        return math.inf
    return -total


@njit(cache=True, nogil=True)
def score_into(theta, w, y, ly, l1y, ys, X, Z, ml, dl, grad):
    """Fill ``grad`` with the score (gradient of the log-likelihood)."""
    r = X.shape[1]
    s = Z.shape[1]
    grad[:] = 0.0
    for t in range(y.size):
        if w[t] == 0.0:
            continue
        eta, nu = _predictors(theta, X, Z, t)
        mu = _linkinv(ml, eta)
        sig = _sigma(dl, nu)
        if math.isnan(sig):
            sig = SIG_EPS
        phi = 1.0 / (sig * sig) - 1.0
        p = mu * phi
        q = (1.0 - mu) * phi
        dq = _digamma(q)
        resid = ys[t] - (_digamma(p) - dq)
        u_mu = phi * resid * _mu_eta(ml, eta)
        a = -2.0 / (sig * sig * sig) * (mu * resid + l1y[t] - dq + _digamma(phi))
        u_sig = a * _mu_eta(dl, nu)
        for j in range(r):
            grad[j] += w[t] * u_mu * X[t, j]
        for j in range(s):
            grad[r + j] += w[t] * u_sig * Z[t, j]


@njit(cache=True, nogil=True)
def fisher(theta, w, X, Z, ml, dl):
    """Expected information matrix.

    Per observation, with ``v1 = psi'(mu*phi)``, ``v2 = psi'((1-mu)*phi)``:
    mean weight ``phi^2 (v1 + v2) mu_eta^2``; cross weight
    ``-2 phi / sig^3 (mu v1 - (1-mu) v2) mu_eta sig_nu``; dispersion weight
    ``4 / sig^6 (mu^2 v1 + (1-mu)^2 v2 - psi'(phi)) sig_nu^2``.
    """
    r = X.shape[1]
    s = Z.shape[1]
    k = r + s
    K = np.zeros((k, k))
    for t in range(X.shape[0]):
        if w[t] == 0.0:
            continue
        eta, nu = _predictors(theta, X, Z, t)
        mu = _linkinv(ml, eta)
        sig = _sigma(dl, nu)
        if math.isnan(sig):
            sig = SIG_EPS
        phi = 1.0 / (sig * sig) - 1.0
        v1 = _trigamma(mu * phi)
        v2 = _trigamma((1.0 - mu) * phi)
        m_eta = _mu_eta(ml, eta)
        s_nu = _mu_eta(dl, nu)
        sig3 = sig * sig * sig
        ww = w[t] * phi * phi * (v1 + v2) * m_eta * m_eta
        cc = -w[t] * 2.0 * phi / sig3 * (mu * v1 - (1.0 - mu) * v2) * m_eta * s_nu
        dd = w[t] * 4.0 / (sig3 * sig3) * (
            mu * mu * v1 + (1.0 - mu) * (1.0 - mu) * v2 - _trigamma(phi)) * s_nu * s_nu
        for i in range(r):
            xi = X[t, i]
            for j in range(i, r):
                K[i, j] += ww * xi * X[t, j]
            for j in range(s):
                K[i, r + j] += cc * xi * Z[t, j]
        for i in range(s):
            zi = Z[t, i]
            for j in range(i, s):
                K[r + i, r + j] += dd * zi * Z[t, j]
    for i in range(k):
        for j in range(i):
            K[i, j] = K[j, i]
    return K


@njit(cache=True, nogil=True)
def cholesky_inverse(A, out):
    """Invert a symmetric positive definite matrix; False if not PD."""
    k = A.shape[0]
    L = np.zeros((k, k))
    for j in range(k):
        d = A[j, j]
        for m in range(j):
            d -= L[j, m] * L[j, m]
        if not (d > 0.0) or not math.isfinite(d):
            return False
        L[j, j] = math.sqrt(d)
        for i in range(j + 1, k):
            v = A[i, j]
            for m in range(j):
                v -= L[i, m] * L[j, m]
            L[i, j] = v / L[j, j]
    Linv = np.zeros((k, k))
    for i in range(k):
        Linv[i, i] = 1.0 / L[i, i]
        for j in range(i):
            v = 0.0
            for m in range(j, i):
                v -= L[i, m] * Linv[m, j]
            Linv[i, j] = v / L[i, i]
    for i in range(k):
        for j in range(i, k):
            v = 0.0
            for m in range(j, k):
                v += Linv[m, i] * Linv[m, j]
            out[i, j] = v
            out[j, i] = v
    return True


@njit(cache=True, nogil=True)
def _reset_metric(x, w, X, Z, ml, dl, H):
    K = fisher(x, w, X, Z, ml, dl)
    if cholesky_inverse(K, H):
        return
    H[:, :] = 0.0
    for i in range(x.size):
        H[i, i] = 1.0 / max(abs(K[i, i]), 1.0)


@njit(cache=True, nogil=True)
def _maxabs(v):
    m = 0.0
    for i in range(v.size):
        a = abs(v[i])
        if not (a <= m):
            m = a
    return m


@njit(cache=True, nogil=True)
def bfgs(theta0, H0, w, y, ly, l1y, ys, X, Z, ml, dl, maxit, tol_rel, step_tol):
    """Maximize the (weighted) log-likelihood by BFGS with Armijo backtracking.

    ``H0`` is the initial inverse-Hessian approximation; pass a 0x0 array to
    start from the inverse expected information at ``theta0``. Returns
    ``(theta, loglik, grad_maxabs, iterations, converged, start_loglik)``.
    """
    k = theta0.size
    x = theta0.copy()
    g = np.empty(k)
    f = negloglik(x, w, y, ly, l1y, X, Z, ml, dl)
    f0 = f
    if not math.isfinite(f):
        return x, -f, math.inf, 0, False, -f0
    score_into(x, w, y, ly, l1y, ys, X, Z, ml, dl, g)
    for i in range(k):
        g[i] = -g[i]
    gmax = _maxabs(g)
    if gmax <= tol_rel * max(1.0, abs(f)):
        return x, -f, gmax, 0, True, -f0

    H = np.empty((k, k))
    if H0.shape[0] == k:
        H[:, :] = H0
    else:
        _reset_metric(x, w, X, Z, ml, dl, H)
    fresh = True
    d = np.empty(k)
    xn = np.empty(k)
    gn = np.empty(k)
    Hy = np.empty(k)
    sv = np.empty(k)
    yv = np.empty(k)
    converged = False
    it = 0
    while it < maxit:
        it += 1
        gd = 0.0
        for i in range(k):
            v = 0.0
            for j in range(k):
                v -= H[i, j] * g[j]
            d[i] = v
            gd += v * g[i]
        if not (gd < 0.0):
            if fresh:
                break
            _reset_metric(x, w, X, Z, ml, dl, H)
            fresh = True
            continue

        t = 1.0
        accepted = False
        fn = math.inf
        flat_tol = 1e-12 * max(1.0, abs(f))
        for ls in range(60):
            for i in range(k):
                xn[i] = x[i] + t * d[i]
            fn = negloglik(xn, w, y, ly, l1y, X, Z, ml, dl)
            if math.isfinite(fn):
                if fn <= f + 1e-4 * t * gd:
                    accepted = True
                    break
                if ls == 0 and fn <= f + flat_tol:
                    # function values flat at machine precision: approximate
                    # Wolfe test on the directional derivative instead
                    score_into(xn, w, y, ly, l1y, ys, X, Z, ml, dl, gn)
                    gnd = 0.0
                    for i in range(k):
                        gnd -= gn[i] * d[i]
                    if 0.9 * gd <= gnd <= -0.9998 * gd:
                        accepted = True
                        break
                tq = -gd * t * t / (2.0 * (fn - f - gd * t))
                t = min(max(tq, 0.1 * t), 0.5 * t)
            else:
                t *= 0.5
        if not accepted:
            if fresh:
                break
            _reset_metric(x, w, X, Z, ml, dl, H)
            fresh = True
            continue

        score_into(xn, w, y, ly, l1y, ys, X, Z, ml, dl, gn)
        step = 0.0
        sy = 0.0
        ss = 0.0
        yy = 0.0
        for i in range(k):
            gn[i] = -gn[i]
            sv[i] = xn[i] - x[i]
            yv[i] = gn[i] - g[i]
            sy += sv[i] * yv[i]
            ss += sv[i] * sv[i]
            yy += yv[i] * yv[i]
            step = max(step, abs(sv[i]))
            x[i] = xn[i]
        f = fn
        if sy > 1e-12 * math.sqrt(ss * yy):
            rho = 1.0 / sy
            yHy = 0.0
            for i in range(k):
                v = 0.0
                for j in range(k):
                    v += H[i, j] * yv[j]
                Hy[i] = v
                yHy += yv[i] * v
            c = rho * rho * yHy + rho
            for i in range(k):
                for j in range(k):
                    H[i, j] += -rho * (Hy[i] * sv[j] + sv[i] * Hy[j]) + c * sv[i] * sv[j]
        was_fresh = fresh
        fresh = False
        for i in range(k):
            g[i] = gn[i]
        gmax = _maxabs(g)
        if gmax <= tol_rel * max(1.0, abs(f)):
            converged = True
            break
        if step <= step_tol:
            if was_fresh:
                break
            _reset_metric(x, w, X, Z, ml, dl, H)
            fresh = True
    return x, -f, gmax, it, converged, -f0


@njit(cache=True, nogil=True)
def parametric_replicates(theta_hat, H0, ystar, y, ly, l1y, X, Z, ml, dl,
                          maxit, tol_rel, step_tol):
    """Refit every pseudo-response row of ``ystar`` starting from ``theta_hat``.

    Returns ``(thetas, converged, ll_ss, ll_sh, ll_os)`` where ``ll_ss`` is
    the replicate log-likelihood at its own estimate, ``ll_sh`` the replicate
    log-likelihood at ``theta_hat`` and ``ll_os`` the original-sample
    log-likelihood at the replicate estimate.
    """
    W, n = ystar.shape
    k = theta_hat.size
    ones = np.ones(n)
    thetas = np.empty((W, k))
    conv = np.zeros(W, dtype=np.bool_)
    ll_ss = np.empty(W)
    ll_sh = np.empty(W)
    ll_os = np.empty(W)
    lyb = np.empty(n)
    l1yb = np.empty(n)
    ysb = np.empty(n)
    for b in range(W):
        yb = ystar[b]
        for t in range(n):
            lyb[t] = math.log(yb[t])
            l1yb[t] = math.log1p(-yb[t])
            ysb[t] = lyb[t] - l1yb[t]
        th, ll, _, _, ok, ll0 = bfgs(theta_hat, H0, ones, yb, lyb, l1yb, ysb, X, Z,
                                     ml, dl, maxit, tol_rel, step_tol)
        thetas[b] = th
        conv[b] = ok
        ll_ss[b] = ll
        ll_sh[b] = ll0
        ll_os[b] = -negloglik(th, ones, y, ly, l1y, X, Z, ml, dl)
    return thetas, conv, ll_ss, ll_sh, ll_os


@njit(cache=True, nogil=True)
def case_replicates(theta_hat, H0, counts, y, ly, l1y, ys, X, Z, ml, dl,
                    maxit, tol_rel, step_tol):
    """Refit case-resampled samples given as per-row draw counts.

    Same outputs as :func:`parametric_replicates` plus ``ll_out``, the
    log-likelihood of the never-drawn rows at the replicate estimate.
    """
    W, n = counts.shape
    k = theta_hat.size
    ones = np.ones(n)
    held = np.empty(n)
    thetas = np.empty((W, k))
    conv = np.zeros(W, dtype=np.bool_)
    ll_ss = np.empty(W)
    ll_sh = np.empty(W)
    ll_os = np.empty(W)
    ll_out = np.empty(W)
    for b in range(W):
        wb = counts[b]
        th, ll, _, _, ok, ll0 = bfgs(theta_hat, H0, wb, y, ly, l1y, ys, X, Z,
                                     ml, dl, maxit, tol_rel, step_tol)
        for t in range(n):
            held[t] = 1.0 if wb[t] == 0.0 else 0.0
        thetas[b] = th
        conv[b] = ok
        ll_ss[b] = ll
        ll_sh[b] = ll0
        ll_os[b] = -negloglik(th, ones, y, ly, l1y, X, Z, ml, dl)
        ll_out[b] = -negloglik(th, held, y, ly, l1y, X, Z, ml, dl)
    return thetas, conv, ll_ss, ll_sh, ll_os, ll_out

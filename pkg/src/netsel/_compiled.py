"""Compiled trajectory kernels for the built-in model families.

Each family provides ``f(p, x)`` and ``jac(p, x)`` over a tuple ``p`` of
five 2-D float arrays; a uniform parameter type lets the engines dispatch
on an integer family code and be cached on disk.  The engines mirror the
reference loops in :mod:`netsel.integrate` step for step and report
failures through an integer status instead of raising:

    0 ok, 1 non-finite state, 2 Newton did not converge

A singular linear system surfaces as ``numpy.linalg.LinAlgError``.
"""

import numpy as np
from numba import njit

OK, OVERFLOW, NEWTON_FAIL = 0, 1, 2
FAMILY_CODES = {"memory": 0, "duffing": 1, "crn": 2}


@njit(cache=True)
def memory_f(p, x):
    # pairwise terms are antisymmetric (beta is symmetric), so visit each pair once
    beta, scale = p[0], p[1][0, 0]
    N = x.shape[0]
    out = np.zeros(N)
    for i in range(N):
        for j in range(i + 1, N):
            d = x[j] - x[i]
            s, c = np.sin(d), np.cos(d)
            term = beta[i, j] * s + 2.0 * scale * s * c
            out[i] += term
            out[j] -= term
    return out


@njit(cache=True)
def memory_jac(p, x):
    beta, scale = p[0], p[1][0, 0]
    N = x.shape[0]
    jac = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            c = np.cos(x[j] - x[i])
            v = beta[i, j] * c + 2.0 * scale * (2.0 * c * c - 1.0)
            jac[i, j] = v
            jac[j, i] = v
            jac[i, i] -= v
            jac[j, j] -= v
    return jac


@njit(cache=True)
def duffing_f(p, x):
    lin, chi_c, chi_s = p[0], p[1], p[2][0]
    N = chi_s.shape[0]
    out = lin @ x
    for i in range(N):
        xi = x[2 * i]
        acc = chi_s[i] * xi * xi * xi
        for j in range(N):
            if chi_c[i, j] != 0.0:
                d = xi - x[2 * j]
                acc += chi_c[i, j] * d * d * d
        out[2 * i + 1] += acc
    return out


@njit(cache=True)
def duffing_jac(p, x):
    lin, chi_c, chi_s = p[0], p[1], p[2][0]
    N = chi_s.shape[0]
    jac = lin.copy()
    for i in range(N):
        xi = x[2 * i]
        diag = 3.0 * chi_s[i] * xi * xi
        for j in range(N):
            if chi_c[i, j] != 0.0:
                d = xi - x[2 * j]
                c = 3.0 * chi_c[i, j] * d * d
                jac[2 * i + 1, 2 * j] -= c
                diag += c
        jac[2 * i + 1, 2 * i] += diag
    return jac


@njit(cache=True)
def _monomial(x, powers, r):
    v = 1.0
    for k in range(x.shape[0]):
        for _ in range(int(powers[r, k])):
            v *= x[k]
    return v


@njit(cache=True)
def _monomial_grad(x, powers, r, k):
    if powers[r, k] == 0:
        return 0.0
    v = powers[r, k]
    for m in range(x.shape[0]):
        e = int(powers[r, m]) - 1 if m == k else int(powers[r, m])
        for _ in range(e):
            v *= x[m]
    return v


@njit(cache=True)
def crn_f(p, x):
    phi, pi, omega, vf, vb = p[0], p[1], p[2], p[3][0], p[4][0]
    R = vf.shape[0]
    lam = np.empty(R)
    for r in range(R):
        lam[r] = vf[r] * _monomial(x, pi, r) - vb[r] * _monomial(x, omega, r)
    return phi @ lam


@njit(cache=True)
def crn_jac(p, x):
    phi, pi, omega, vf, vb = p[0], p[1], p[2], p[3][0], p[4][0]
    R, N = pi.shape
    dlam = np.empty((R, N))
    for r in range(R):
        for k in range(N):
            dlam[r, k] = vf[r] * _monomial_grad(x, pi, r, k) - vb[r] * _monomial_grad(x, omega, r, k)
    return phi @ dlam


@njit(cache=True)
def _f(code, p, x):
    if code == 0:
        return memory_f(p, x)
    if code == 1:
        return duffing_f(p, x)
    return crn_f(p, x)


@njit(cache=True)
def _jac(code, p, x):
    if code == 0:
        return memory_jac(p, x)
    if code == 1:
        return duffing_jac(p, x)
    return crn_jac(p, x)


@njit(cache=True)
def _all_finite(a):
    for v in a.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True)
def simulate_fe(code, p, x0, L, h):
    dim = x0.shape[0]
    X = np.empty((L + 1, dim))
    X[0] = x0
    for k in range(1, L + 1):
        X[k] = X[k - 1] + h * _f(code, p, X[k - 1])
        if not _all_finite(X[k]):
            return X, OVERFLOW, k
    return X, OK, 0


@njit(cache=True)
def simulate_ti(code, p, x0, L, h, tol, max_iter):
    dim = x0.shape[0]
    eye = np.eye(dim)
    X = np.empty((L + 1, dim))
    X[0] = x0
    f_prev = _f(code, p, x0)
    for k in range(1, L + 1):
        x_prev = X[k - 1]
        base = x_prev + 0.5 * h * f_prev
        x = x_prev + h * f_prev
        if not _all_finite(x):
            x = x_prev.copy()
        done = False
        for it in range(max_iter + 1):
            f_x = _f(code, p, x)
            residual = x - 0.5 * h * f_x - base
            res_norm = np.max(np.abs(residual)) if dim > 0 else 0.0
            scale = max(1.0, np.max(np.abs(x))) if dim > 0 else 1.0
            if res_norm <= tol * scale:
                done = True
                break
            if not np.isfinite(res_norm) or it == max_iter:
                break
            system = eye - 0.5 * h * _jac(code, p, x)
            if not _all_finite(system):
                break
            x = x - np.linalg.solve(system, residual)
        if not done:
            if np.isfinite(res_norm):
                return X, NEWTON_FAIL, k
            return X, OVERFLOW, k
        X[k] = x
        f_prev = f_x
    return X, OK, 0


@njit(cache=True)
def adjoint_fe(code, p, X, G, h):
    """``sum_k S_k^T G_k`` for forward-Euler sensitivities, by a backward sweep."""
    L = X.shape[0] - 1
    lam = G[L].copy()
    for k in range(L, 0, -1):
        J = _jac(code, p, X[k - 1])
        lam = G[k - 1] + lam + h * (J.T @ lam)
        if not _all_finite(lam):
            return lam, OVERFLOW, k
    return lam, OK, 0


@njit(cache=True)
def adjoint_ti(code, p, X, G, h):
    """``sum_k S_k^T G_k`` for trapezoidal sensitivities, by a backward sweep."""
    L = X.shape[0] - 1
    dim = X.shape[1]
    eye = np.eye(dim)
    lam = G[L].copy()
    J_next = _jac(code, p, X[L]) if L > 0 else np.zeros((dim, dim))
    for k in range(L, 0, -1):
        system = eye - 0.5 * h * J_next
        if not _all_finite(system):
            return lam, OVERFLOW, k
        u = np.linalg.solve(system.T, lam)
        J_prev = _jac(code, p, X[k - 1])
        lam = G[k - 1] + u + 0.5 * h * (J_prev.T @ u)
        if not _all_finite(lam):
            return lam, OVERFLOW, k
        J_next = J_prev
    return lam, OK, 0

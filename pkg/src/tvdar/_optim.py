"""Compiled Gaussian quasi-likelihood and a Nelder-Mead simplex search.

The search runs on ``theta = (phi, log omega, log alpha)`` so positivity holds
by construction. Outside the box below the objective returns ``_BIG``; the
simplex treats that as a wall.
"""

import math

import numba
import numpy as np

PHI_MAX = 2.0
LOG_OMEGA_BOUNDS = (-80.0, 80.0)
LOG_ALPHA_BOUNDS = (-30.0, 10.0)

_BIG = 1e300


@numba.njit(cache=True, nogil=True)
def neg_quasi_loglik(theta, xl, xc, w, wsum):
    """Weighted average of ``0.5 * (log h_t + r_t**2 / h_t)``."""
    phi = theta[0]
    lw = theta[1]
    la = theta[2]
    if (
        abs(phi) > PHI_MAX
        or lw < LOG_OMEGA_BOUNDS[0]
        or lw > LOG_OMEGA_BOUNDS[1]
        or la < LOG_ALPHA_BOUNDS[0]
        or la > LOG_ALPHA_BOUNDS[1]
    ):
        return _BIG
    omega = math.exp(lw)
    alpha = math.exp(la)
    s = 0.0
    for i in range(xl.shape[0]):
        h = omega + alpha * xl[i] * xl[i]
        r = xc[i] - phi * xl[i]
        s += w[i] * (math.log(h) + r * r / h)
    val = 0.5 * s / wsum
    if not math.isfinite(val):
        return _BIG
    return val


@numba.njit(cache=True, nogil=True)
def _diameter(sim):
    d = 0.0
    m = sim.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(sim.shape[1]):
                v = abs(sim[i, k] - sim[j, k])
                if v > d:
                    d = v
    return d


@numba.njit(cache=True, nogil=True)
def _sort_simplex(sim, fs):
    order = np.argsort(fs)
    return sim[order].copy(), fs[order].copy()


@numba.njit(cache=True, nogil=True)
def nelder_mead(x0, step, xl, xc, w, tol, max_iter):
    """Minimize :func:`neg_quasi_loglik` from ``x0``.

    Returns ``(x_best, f_best, iterations, n_evals, converged)``. Convergence
    means the largest coordinate-wise distance between two vertices is below
    ``tol``.
    """
    n = x0.shape[0]
    wsum = w.sum()
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        sim[i + 1] = x0
        sim[i + 1, i] += step[i]
    for i in range(n + 1):
        fs[i] = neg_quasi_loglik(sim[i], xl, xc, w, wsum)
    nfev = n + 1
    it = 0
    converged = False
    while True:
        sim, fs = _sort_simplex(sim, fs)
        if _diameter(sim) < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = np.zeros(n)
        for i in range(n):
            centroid += sim[i]
        centroid /= n
        worst = sim[n]
        xr = centroid + (centroid - worst)
        fr = neg_quasi_loglik(xr, xl, xc, w, wsum)
        nfev += 1
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = neg_quasi_loglik(xe, xl, xc, w, wsum)
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
            continue
        if fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
            continue
        if fr < fs[n]:
            xk = centroid + 0.5 * (xr - centroid)
            fk = neg_quasi_loglik(xk, xl, xc, w, wsum)
            nfev += 1
            if fk <= fr:
                sim[n] = xk
                fs[n] = fk
                continue
        else:
            xk = centroid + 0.5 * (worst - centroid)
            fk = neg_quasi_loglik(xk, xl, xc, w, wsum)
            nfev += 1
            if fk < fs[n]:
                sim[n] = xk
                fs[n] = fk
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fs[i] = neg_quasi_loglik(sim[i], xl, xc, w, wsum)
            nfev += 1
    return sim[0].copy(), fs[0], it, nfev, converged


@numba.njit(cache=True, nogil=True)
def moment_start(xl, xc, w):
    """Weighted least-squares start: AR slope, then ARCH regression of e**2 on x**2.

    Returns ``(phi, omega, alpha)`` in natural coordinates, always admissible.
    """
    sxx = 0.0
    sxy = 0.0
    for i in range(xl.shape[0]):
        sxx += w[i] * xl[i] * xl[i]
        sxy += w[i] * xl[i] * xc[i]
    phi = sxy / sxx if sxx > 0 else 0.0
    limit = 0.95 * PHI_MAX
    if phi > limit:
        phi = limit
    elif phi < -limit:
        phi = -limit
    # weighted OLS of e^2 on (1, x^2)
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    t0 = 0.0
    t1 = 0.0
    for i in range(xl.shape[0]):
        e = xc[i] - phi * xl[i]
        z = xl[i] * xl[i]
        s0 += w[i]
        s1 += w[i] * z
        s2 += w[i] * z * z
        t0 += w[i] * e * e
        t1 += w[i] * z * e * e
    mean_e2 = t0 / s0
    det = s0 * s2 - s1 * s1
    if det > 1e-12 * s0 * s2 and s2 > 0:
        alpha = (s0 * t1 - s1 * t0) / det
        omega = (t0 - alpha * s1) / s0
    else:
        alpha = 0.0
        omega = mean_e2
    mean_z = s1 / s0
    if alpha < 0.05:
        alpha = 0.05
    if alpha > 5.0:
        alpha = 5.0
    if omega <= 0.1 * mean_e2:
        omega = max(0.5 * mean_e2 - alpha * mean_z * 0.5, 0.1 * mean_e2)
    if not omega > 0:
        omega = 1e-12
    return phi, omega, alpha

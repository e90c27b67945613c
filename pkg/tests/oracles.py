"""Independent oracles used by the tests.

Nothing here imports the estimation code; each function recomputes its
quantity from first principles (quadrature, brute force or explicit products).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize, stats

# generative law of the simulation design, restated independently
ALPHA = (0.25, 0.25, -0.5)
MIX = ((0.5, 0.0, 1 / 8), (0.5, 0.5, 1 / 10))   # (weight, mean, sd)
X2_MEAN, X2_SD, X2_LO, X2_HI = 1.0, 1.0, -2.0, 4.0


def _x2_density(x):
    norm = stats.norm.cdf(X2_HI, X2_MEAN, X2_SD) - stats.norm.cdf(X2_LO, X2_MEAN, X2_SD)
    return stats.norm.pdf(x, X2_MEAN, X2_SD) / norm


def _integrate_over_covariates(fn):
    """E over X1 ~ Bernoulli(1/2), X2 ~ truncated normal of ``fn(mu)`` for T | X ~ mixture."""
    total = 0.0
    for x1 in (0.0, 1.0):
        def inner(x2):
            mu = ALPHA[0] + ALPHA[1] * x1 + ALPHA[2] * x2
            return fn(mu) * _x2_density(x2)
        val, _ = integrate.quad(inner, X2_LO, X2_HI, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += 0.5 * val
    return total


def survival_t(c):
    """P(T > c) by quadrature."""
    def fn(mu):
        return sum(w * stats.norm.sf(c, mu + m, s) for w, m, s in MIX)
    return _integrate_over_covariates(fn)


def calibrated_c(target=0.30):
    return optimize.brentq(lambda c: survival_t(c) - target, -5, 5, xtol=1e-14)


def conditional_mean_z(c):
    """E(exp(-T) | T > c) via the lognormal partial expectation per component."""
    def fn(mu):
        out = 0.0
        for w, m, s in MIX:
            loc = mu + m
            out += w * math.exp(-loc + 0.5 * s * s) * stats.norm.cdf((loc - s * s - c) / s)
        return out
    return _integrate_over_covariates(fn) / survival_t(c)


def km_product(residuals, delta, t):
    """``1 - prod_{e_i <= t} (1 - (delta_i / n) / H(e_i))`` evaluated literally."""
    e = np.asarray(residuals, dtype=float)
    d = np.asarray(delta, dtype=float)
    n = len(e)
    surv = 1.0
    for i in range(n):
        if e[i] <= t:
            risk = np.mean(e >= e[i])
            surv *= 1.0 - (d[i] / n) / risk
    return 1.0 - surv


def gehan_bruteforce(alpha, x, v, delta):
    alpha = np.atleast_1d(alpha)
    e = v - x @ alpha
    n = len(e)
    total = 0.0
    for i, j in itertools.product(range(n), range(n)):
        if delta[i]:
            total += max(e[j] - e[i], 0.0)
    return total / n**2


def grid_minimum(x, v, delta, center, half_width=0.5, step=1e-3):
    """Brute-force Gehan minimum over a square grid (vectorised over grid points)."""
    g = np.arange(-half_width, half_width + step / 2, step)
    a1 = center[0] + g
    a2 = center[1] + g
    A1, A2 = np.meshgrid(a1, a2, indexing="ij")
    pts = np.column_stack([A1.ravel(), A2.ravel()])
    e = v[None, :] - pts @ x.T                        # (G, n)
    det = np.flatnonzero(delta == 1)
    vals = np.zeros(len(pts))
    for i in det:
        vals += np.maximum(e - e[:, [i]], 0.0).sum(axis=1)
    vals /= len(v) ** 2
    k = int(np.argmin(vals))
    return pts[k], vals[k]


def ols(y, design):
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sigma2 = resid @ resid / (len(y) - design.shape[1])
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return coef, cov


def km_masses_product(residuals, delta):
    """Jump points and masses of the literal product-formula estimate."""
    e = np.asarray(residuals, dtype=float)
    pts = np.unique(e[np.asarray(delta) == 1])
    cdf = np.array([km_product(residuals, delta, t) for t in pts])
    return pts, np.diff(np.concatenate([[0.0], cdf]))


def pseudo_loglik_loop(theta, y, x, v, delta, c, alpha, phi, tau, family):
    """Pseudo log-likelihood by explicit loops over subjects and jumps."""
    from scipy.stats import bernoulli, norm, poisson

    def logf(yi, w):
        if family == "gaussian":
            return norm.logpdf(yi, loc=w, scale=math.sqrt(phi))
        if family == "bernoulli":
            return bernoulli.logpmf(int(yi), 1.0 / (1.0 + math.exp(-w)))
        return poisson.logpmf(int(yi), math.exp(w))

    e = v - x @ alpha
    pts, masses = km_masses_product(e, delta)
    total = 0.0
    for i in range(len(y)):
        if delta[i] == 1:
            w = theta[0] + x[i] @ theta[1:-1] + theta[-1] * math.exp(-v[i])
            total += logf(y[i], w)
            continue
        shift = x[i] @ alpha
        s = 0.0
        for t, m in zip(pts, masses):
            if c - shift < t <= tau:
                w = theta[0] + x[i] @ theta[1:-1] + theta[-1] * math.exp(-(t + shift))
                s += math.exp(logf(y[i], w)) * m
        total += math.log(max(s, 1e-12))
    return total / len(y)

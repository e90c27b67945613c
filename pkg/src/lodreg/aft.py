"""Gehan rank estimation of the accelerated failure time slopes.

The model is ``T = X' alpha + error`` with an unspecified error law. Only the
slopes are identified by ranks; the intercept stays in the residuals
``e = V - X' alpha``.

The Gehan loss

    G(alpha) = n^-2 sum_i sum_j delta_i max(e_j - e_i, 0)

is convex and piecewise linear. ``fit_gehan`` minimises it in two phases:

1. Newton iterations on an induced-smoothing surrogate (each hinge replaced by
   its Gaussian-smoothed version) to get close to the minimiser.
2. Exact descent on ``G``: the direction is minus the minimum-norm element of
   the epsilon-subdifferential, and the step is an exact line search. The line
   search is a weighted median over the kinks met along that direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear
from scipy.special import ndtr

from .data import ObservationSet
from .errors import ConvergenceError, EstimationError

IMPROVEMENT_TOL = 1e-10
SUBGRADIENT_TOL = 1e-10
MAX_POLISH_ITER = 200
WARM_START_TOL = 1e-10

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class AftFit:
    alpha: np.ndarray
    residuals: np.ndarray
    delta: np.ndarray
    gehan_objective: float
    subgradient_norm: float
    iterations: int = 0


def _objective_from_residuals(e: np.ndarray, delta: np.ndarray) -> float:
    n = len(e)
    es = np.sort(e)
    suffix = np.append(np.cumsum(es[::-1])[::-1], 0.0)
    ei = e[delta == 1]
    k = np.searchsorted(es, ei, side="right")
    total = suffix[k] - (n - k) * ei
    return float(total.sum() / n**2)


def _subgradient_from_residuals(e, x, delta) -> np.ndarray:
    n, p = x.shape
    order = np.argsort(e, kind="stable")
    es = e[order]
    xs = x[order]
    suffix_x = np.vstack([np.cumsum(xs[::-1], axis=0)[::-1], np.zeros((1, p))])
    det = delta == 1
    k = np.searchsorted(es, e[det], side="left")
    cnt = (n - k)[:, None]
    u = cnt * x[det] - suffix_x[k]
    return u.sum(axis=0) / n**2


def gehan_objective(alpha, data: ObservationSet) -> float:
    """Gehan loss ``n^-2 sum_i sum_j delta_i (e_j - e_i)^+``."""
    alpha = np.asarray(alpha, dtype=float)
    e = data.v - data.x @ alpha
    return _objective_from_residuals(e, data.delta)


def gehan_subgradient(alpha, data: ObservationSet) -> np.ndarray:
    """Subgradient ``n^-2 sum_i sum_j delta_i (X_i - X_j) 1{e_i <= e_j}``.

    Equals the gradient of :func:`gehan_objective` away from residual ties.
    """
    alpha = np.asarray(alpha, dtype=float)
    e = data.v - data.x @ alpha
    return _subgradient_from_residuals(e, data.x, data.delta)


class _Pairs:
    """Pair differences ``(V_j - V_i, X_j - X_i)`` over detected ``i`` and all ``j``.

    Pairs with ``X_j == X_i`` contribute a constant and are dropped.
    """

    def __init__(self, x, v, delta):
        n = len(v)
        det = np.flatnonzero(delta == 1)
        ii = np.repeat(det, n)
        jj = np.tile(np.arange(n), len(det))
        dx = x[jj] - x[ii]
        keep = np.any(dx != 0, axis=1)
        self.dx = np.ascontiguousarray(dx[keep])
        self.dv = v[jj[keep]] - v[ii[keep]]
        self.n = n

    def residuals(self, alpha):
        return self.dv - self.dx @ alpha

    def smoothed(self, alpha, sigma):
        """Smoothed loss, gradient and Hessian (unscaled sums)."""
        r = self.residuals(alpha)
        u = r / sigma
        cdf = ndtr(u)
        pdf = np.exp(-0.5 * u * u) / _SQRT_2PI
        val = float(np.sum(r * cdf + sigma * pdf))
        grad = -(cdf @ self.dx)
        hess = (self.dx * (pdf / sigma)[:, None]).T @ self.dx
        return val, grad, hess

    def min_norm_subgradient(self, alpha, eps):
        """Minimum-norm element of the eps-subdifferential (unscaled)."""
        r = self.residuals(alpha)
        g = -(self.dx[r > eps].sum(axis=0))
        active = np.abs(r) <= eps
        if not np.any(active):
            return g
        a = -self.dx[active].T
        sol = lsq_linear(a, -g, bounds=(0.0, 1.0), method="bvls")
        return g + a @ sol.x

    def line_search(self, alpha, d):
        """Exact minimiser ``s >= 0`` of the loss along ``alpha + s d``."""
        a = self.residuals(alpha)
        b = self.dx @ d
        nz = b != 0
        a, b = a[nz], b[nz]
        k = a / b
        w = np.abs(b)
        # derivative at s = 0+
        slope0 = -np.sum(b[b > 0]) + np.sum(w[k <= 0])
        if slope0 >= 0:
            return 0.0
        ahead = k > 0
        kk, ww = k[ahead], w[ahead]
        order = np.argsort(kk)
        cum = np.cumsum(ww[order])
        idx = int(np.searchsorted(cum, -slope0, side="left"))
        idx = min(idx, len(cum) - 1)
        return float(kk[order][idx])


def _initial_alpha(x, v, delta):
    det = delta == 1
    n1, p = int(det.sum()), x.shape[1]
    if n1 <= p + 1:
        return np.zeros(p)
    design = np.column_stack([np.ones(n1), x[det]])
    coef = np.linalg.lstsq(design, v[det], rcond=None)[0]
    return coef[1:]


def fit_gehan(data: ObservationSet, init=None) -> AftFit:
    """Minimise the Gehan loss over the slopes ``alpha``.

    Raises :class:`EstimationError` when fewer than two covariate values are
    detected or an ``x`` column is constant, and :class:`ConvergenceError`
    (carrying the best iterate) when the exact phase does not settle.
    """
    x, v, delta = data.x, data.v, data.delta
    n, p = x.shape
    if int(delta.sum()) < 2:
        raise EstimationError("Gehan fit needs at least two detected observations")
    if p == 0:
        e = v.copy()
        return AftFit(np.zeros(0), e, delta.copy(), _objective_from_residuals(e, delta), 0.0)
    if np.any(np.ptp(x, axis=0) == 0):
        raise EstimationError("constant covariate column in the AFT design")

    alpha = _initial_alpha(x, v, delta) if init is None else np.asarray(init, float).copy()
    pairs = _Pairs(x, v, delta)
    if len(pairs.dv) == 0:
        raise EstimationError("no informative pairs for the Gehan loss")
    scale = n**2

    # phase 1: smoothed Newton
    sigma = np.sqrt(np.sum(pairs.dx**2, axis=1) / n)
    val, grad, hess = pairs.smoothed(alpha, sigma)
    for _ in range(50):
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(30):
            cand = alpha + t * step
            cval, cgrad, chess = pairs.smoothed(cand, sigma)
            if cval <= val:
                break
            t *= 0.5
        else:
            break
        alpha, val, grad, hess = cand, cval, cgrad, chess
        if np.max(np.abs(t * step)) < WARM_START_TOL * (1 + np.max(np.abs(alpha))):
            break

    # phase 2: exact descent on the piecewise-linear loss
    resid_scale = 1.0 + float(np.max(np.abs(pairs.dv)))
    eps = 1e-12 * resid_scale
    obj = _objective_from_residuals(v - x @ alpha, delta)
    gnorm = np.inf
    it = 0
    while True:
        g = pairs.min_norm_subgradient(alpha, eps) / scale
        gnorm = float(np.linalg.norm(g))
        if gnorm <= SUBGRADIENT_TOL:
            break
        if it >= MAX_POLISH_ITER:
            raise ConvergenceError(
                "Gehan descent did not converge", last_iterate=alpha.copy()
            )
        it += 1
        d = -g / gnorm
        s = pairs.line_search(alpha, d)
        cand = alpha + s * d
        cobj = _objective_from_residuals(v - x @ cand, delta)
        improvement = obj - cobj
        if improvement > 0:
            alpha, obj = cand, cobj
        if improvement < IMPROVEMENT_TOL:
            if eps >= 1e-6 * resid_scale:
                break
            eps *= 100.0
    e = v - x @ alpha
    return AftFit(
        alpha=alpha,
        residuals=e,
        delta=np.array(delta, copy=True),
        gehan_objective=obj,
        subgradient_norm=gnorm,
        iterations=it,
    )

"""Stage 2: log pseudo-likelihood, its estimating function and the Newton solve.

A censored subject ``i`` contributes ``log S_i`` with

    S_i = sum_k f_{theta,phi}(y_i | t_k + x_i' alpha, x_i) m_k

over the Kaplan-Meier jumps ``(t_k, m_k)`` of the residual distribution with
``c - x_i' alpha < t_k <= tau``. The estimating function carries no
``1/a(phi)`` factor on either the detected or the censored block, so it equals
``a(phi)`` times the gradient of the pseudo-likelihood.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .data import NEG_LOG, ObservationSet
from .errors import ConditionNineWarning, ConvergenceError, SingularityError
from .family import GlmFamily
from .km import StepDistribution

FLOOR = 1e-12
_LOG_FLOOR = math.log(FLOOR)

SCORE_TOL = 1e-8
MAX_ITER = 200
MAX_HALVINGS = 30
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class NuisanceBundle:
    """Stage-1 estimates plugged into the pseudo-likelihood.

    ``c`` is the transformed detection limit of the data the bundle was fitted
    on; ``tau`` the upper end of the residual-scale integral.
    """

    phi_hat: float
    alpha_hat: np.ndarray
    eta_hat: StepDistribution
    tau: float
    c: float

    def __post_init__(self):
        if not self.phi_hat > 0:
            raise ValueError("dispersion estimate must be positive")
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")
        object.__setattr__(self, "alpha_hat", np.asarray(self.alpha_hat, dtype=float))


class CensoredWeights(NamedTuple):
    points: np.ndarray
    weights: np.ndarray
    total: float
    floored: bool


@dataclass(frozen=True, eq=False)
class PseudoFitResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    score_norm: float
    floored_subjects: int
    jacobian: np.ndarray
    loglik: float


class _Evaluation(NamedTuple):
    loglik: float
    score: np.ndarray
    jacobian: np.ndarray | None
    floored: int


class PseudoProblem:
    """Theta-independent pieces of the pseudo-likelihood for one data set."""

    def __init__(self, data: ObservationSet, nuisance: NuisanceBundle, family: GlmFamily):
        self.family = family
        self.n = data.n
        self.k = data.p + 2
        self.a = family.a(nuisance.phi_hat)
        self.phi = nuisance.phi_hat
        det = data.detected
        self.y_det = data.y[det]
        self.d_det = data.layout.design_z(data.x[det], NEG_LOG.forward(data.v[det]))
        self.c_det = family.c(self.y_det, self.phi)

        cens = ~det
        self.y_cen = data.y[cens]
        self.x_cen = data.x[cens]
        self.n_cen = len(self.y_cen)
        eta = nuisance.eta_hat
        t = eta.jump_points
        shift = self.x_cen @ nuisance.alpha_hat
        lower = nuisance.c - shift
        self.mask = (t[None, :] > lower[:, None]) & (t[None, :] <= nuisance.tau)
        self.z_cen = NEG_LOG.forward(t[None, :] + shift[:, None])
        with np.errstate(divide="ignore"):
            self.log_m = np.log(eta.masses)
        self.c_cen = family.c(self.y_cen, self.phi)
        # rows of D(t) without the h(t) entry
        self.u_cen = np.column_stack([np.ones(self.n_cen), self.x_cen, np.zeros(self.n_cen)])

    def _censored_logs(self, theta):
        beta_lin = theta[0] + self.x_cen @ theta[1:-1]
        w = beta_lin[:, None] + theta[-1] * self.z_cen
        y = self.y_cen[:, None]
        logf = (y * w - self.family.b(w)) / self.a + self.c_cen[:, None]
        logl = np.where(self.mask, logf + self.log_m[None, :], -np.inf)
        return w, logl

    def weights(self, theta):
        """Normalised weights, log S_i and the floored mask for every censored row."""
        theta = np.asarray(theta, dtype=float)
        w, logl = self._censored_logs(theta)
        if logl.shape[1] == 0:
            log_s = np.full(self.n_cen, -np.inf)
        else:
            log_s = logsumexp(logl, axis=1)
        floored = ~(log_s >= _LOG_FLOOR)
        with np.errstate(invalid="ignore"):
            wts = np.exp(logl - np.where(floored, 0.0, log_s)[:, None])
        wts[floored] = 0.0
        return w, wts, log_s, floored

    def evaluate(self, theta, jacobian: bool = True) -> _Evaluation:
        theta = np.asarray(theta, dtype=float)
        fam = self.family
        k = self.k
        last = np.zeros(k)
        last[-1] = 1.0

        w_det = self.d_det @ theta
        logf_det = (self.y_det * w_det - fam.b(w_det)) / self.a + self.c_det
        r_det = self.y_det - fam.b_dot(w_det)
        score = self.d_det.T @ r_det

        w, wts, log_s, floored = self.weights(theta)
        ll = float(logf_det.sum() + np.where(floored, _LOG_FLOOR, log_s).sum())

        r = self.y_cen[:, None] - fam.b_dot(w)
        wr = wts * r
        g0 = wr.sum(axis=1)
        g1 = (wr * self.z_cen).sum(axis=1)
        u = self.u_cen
        score = score + u.T @ g0 + last * g1.sum()

        jac = None
        if jacobian:
            jac = -(self.d_det * fam.b_ddot(w_det)[:, None]).T @ self.d_det
            if self.n_cen:
                q = wts * fam.b_ddot(w)
                jac -= _moment_block(u, last, q, self.z_cen)
                rr = wts * r * r
                outer = _moment_block(u, last, rr, self.z_cen)
                gbar = (u * g0[:, None]).T @ (u * g0[:, None])
                cross = u.T @ (g0 * g1)
                gbar = gbar + np.outer(cross, last) + np.outer(last, cross)
                gbar += np.outer(last, last) * np.sum(g1 * g1)
                jac += (outer - gbar) / self.a
            jac /= self.n
        return _Evaluation(ll / self.n, score / self.n, jac, int(floored.sum()))


def _moment_block(u, last, weights, z):
    """``sum_i sum_k weights_ik D_ik D_ik'`` with ``D_ik = u_i + z_ik * last``."""
    m0 = weights.sum(axis=1)
    m1 = (weights * z).sum(axis=1)
    m2 = (weights * z * z).sum(axis=1)
    out = (u * m0[:, None]).T @ u
    cross = u.T @ m1
    out += np.outer(cross, last) + np.outer(last, cross)
    out += np.outer(last, last) * m2.sum()
    return out


def _warn_floored(count: int) -> None:
    if count:
        warnings.warn(
            f"{count} censored subject(s) had integrated likelihood below {FLOOR:g}; "
            "clamped to the floor",
            ConditionNineWarning,
            stacklevel=3,
        )


def censored_weights(x_i, y_i, theta, nuisance: NuisanceBundle,
                     family: GlmFamily) -> CensoredWeights:
    """Kaplan-Meier jumps in ``(c - x_i' alpha, tau]`` and their posterior weights.

    ``total`` is the unnormalised integral ``S_i`` (clamped to the floor when
    it falls below it, in which case ``weights`` is all zero).
    """
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    eta = nuisance.eta_hat
    shift = float(x_i @ nuisance.alpha_hat)
    lower = nuisance.c - shift
    if lower < nuisance.tau:
        pts, masses = eta.restricted_jumps(lower, nuisance.tau)
    else:
        pts, masses = eta.jump_points[:0], eta.masses[:0]
    theta = np.asarray(theta, dtype=float)
    z = NEG_LOG.forward(pts + shift)
    w = theta[0] + x_i @ theta[1:-1] + theta[-1] * z
    phi = nuisance.phi_hat
    logl = family.log_density_w(float(y_i), w, phi) + np.log(masses)
    log_s = logsumexp(logl) if len(pts) else -np.inf
    if not log_s >= _LOG_FLOOR:
        _warn_floored(1)
        return CensoredWeights(pts, np.zeros(len(pts)), FLOOR, True)
    return CensoredWeights(pts, np.exp(logl - log_s), float(np.exp(log_s)), False)


def pseudo_loglik(theta, data: ObservationSet, nuisance: NuisanceBundle,
                  family: GlmFamily) -> float:
    ev = PseudoProblem(data, nuisance, family).evaluate(theta, jacobian=False)
    _warn_floored(ev.floored)
    return ev.loglik


def pseudo_score(theta, data: ObservationSet, nuisance: NuisanceBundle,
                 family: GlmFamily) -> np.ndarray:
    """Averaged estimating function over all subjects."""
    ev = PseudoProblem(data, nuisance, family).evaluate(theta, jacobian=False)
    _warn_floored(ev.floored)
    return ev.score


def pseudo_jacobian(theta, data: ObservationSet, nuisance: NuisanceBundle,
                    family: GlmFamily) -> np.ndarray:
    return PseudoProblem(data, nuisance, family).evaluate(theta).jacobian


def solve_pseudo(data: ObservationSet, nuisance: NuisanceBundle, family: GlmFamily,
                 init) -> PseudoFitResult:
    """Damped Newton solution of the pseudo-likelihood estimating equation.

    Starts from ``init`` (the complete-case estimate). Steps are halved until
    the pseudo-likelihood does not decrease. Stops once the sup-norm of the
    estimating function is at most 1e-8.
    """
    prob = PseudoProblem(data, nuisance, family)
    theta = np.asarray(init, dtype=float).copy()
    ev = prob.evaluate(theta)
    trace = []
    it = 0
    while True:
        norm = float(np.max(np.abs(ev.score)))
        trace.append((it, ev.loglik, norm))
        if norm <= SCORE_TOL:
            break
        if it >= MAX_ITER:
            raise ConvergenceError(
                f"pseudo-likelihood Newton exceeded {MAX_ITER} iterations",
                last_iterate=theta, trace=trace,
            )
        it += 1
        cond = np.linalg.cond(ev.jacobian)
        if not cond < MAX_CONDITION:
            raise SingularityError(
                f"pseudo-score Jacobian is singular (condition number {cond:.3g})",
                condition_number=float(cond),
            )
        step = np.linalg.solve(ev.jacobian, -ev.score)
        cand = _damped(prob, theta, step, ev)
        if cand is None:
            # Newton direction failed to ascend; fall back to the score direction
            cand = _damped(prob, theta, ev.score / max(norm, 1.0), ev)
        if cand is None:
            raise ConvergenceError(
                "pseudo-likelihood line search failed", last_iterate=theta, trace=trace
            )
        theta, ev = cand
    _warn_floored(ev.floored)
    return PseudoFitResult(
        theta=theta, converged=True, iterations=it, score_norm=norm,
        floored_subjects=ev.floored, jacobian=ev.jacobian, loglik=ev.loglik,
    )


def _damped(prob: PseudoProblem, theta, step, ev: _Evaluation):
    slack = 1e-13 * (1.0 + abs(ev.loglik))
    norm = np.max(np.abs(ev.score))
    for _ in range(MAX_HALVINGS + 1):
        cand = theta + step
        try:
            cev = prob.evaluate(cand)
        except ArithmeticError:
            cev = None
        if cev is not None and np.isfinite(cev.loglik):
            if cev.loglik > ev.loglik - slack:
                return cand, cev
            # plateau at rounding level: accept if the score shrank
            if cev.loglik > ev.loglik - 1e3 * slack and np.max(np.abs(cev.score)) < norm:
                return cand, cev
        step = 0.5 * step
    return None

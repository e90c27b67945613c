"""Canonical-link exponential dispersion families and the complete-case GLM fit.

A family supplies ``a(phi)``, the cumulant ``b``, its derivatives and the
normalising term ``c(y, phi)`` of

    f(y) = exp{ [y w - b(w)] / a(phi) + c(y, phi) },   w = D' theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .data import NEG_LOG, LinearPredictorLayout, ObservationSet
from .errors import ConfigurationError, ConvergenceError, NumericError, SingularityError

# exp() overflows just above 709.
_W_MAX = 700.0

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 30


@dataclass(frozen=True)
class GlmFamily:
    kind: str

    def __post_init__(self):
        if self.kind not in ("gaussian", "bernoulli", "poisson"):
            raise ConfigurationError(f"unknown family {self.kind!r}")

    @property
    def has_dispersion(self) -> bool:
        return self.kind == "gaussian"

    def a(self, phi: float) -> float:
        return float(phi) if self.kind == "gaussian" else 1.0

    def b(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "gaussian":
            return 0.5 * w * w
        if self.kind == "bernoulli":
            return np.logaddexp(0.0, w)
        return np.exp(_guard(w))

    def b_dot(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "gaussian":
            return w
        if self.kind == "bernoulli":
            return expit(w)
        return np.exp(_guard(w))

    def b_ddot(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(w)
        if self.kind == "bernoulli":
            m = expit(w)
            return m * (1.0 - m)
        return np.exp(_guard(w))

    def c(self, y, phi: float):
        y = np.asarray(y, dtype=float)
        if self.kind == "gaussian":
            return -0.5 * y * y / phi - 0.5 * np.log(2.0 * math.pi * phi)
        if self.kind == "bernoulli":
            return np.zeros_like(y)
        return -gammaln(y + 1.0)

    def log_density_w(self, y, w, phi: float):
        """Log density at natural parameter ``w`` (vectorised)."""
        return (y * w - self.b(w)) / self.a(phi) + self.c(y, phi)

    def mean(self, w):
        return self.b_dot(w)

    def variance(self, w, phi: float):
        return self.b_ddot(w) * self.a(phi)


def _guard(w):
    if np.any(~np.isfinite(w)):
        raise NumericError("non-finite linear predictor")
    return np.minimum(w, _W_MAX)


GAUSSIAN = GlmFamily("gaussian")
BERNOULLI = GlmFamily("bernoulli")
POISSON = GlmFamily("poisson")

_FAMILIES = {"gaussian": GAUSSIAN, "bernoulli": BERNOULLI, "poisson": POISSON,
             "logistic": BERNOULLI, "binomial": BERNOULLI, "normal": GAUSSIAN}


def get_family(name: str | GlmFamily) -> GlmFamily:
    if isinstance(name, GlmFamily):
        return name
    try:
        return _FAMILIES[name.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown family {name!r}") from None


def log_density(y, t, x, theta, phi, family: GlmFamily) -> float:
    """``log f_{theta,phi}(y | t, x)`` with design ``D(t) = (1, x', exp(-t))'``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    layout = LinearPredictorLayout(len(x))
    d = layout.design(x[None, :], [t])[0]
    w = float(d @ np.asarray(theta, dtype=float))
    if not math.isfinite(w):
        raise NumericError("non-finite linear predictor")
    return float(family.log_density_w(float(y), w, phi))


def score_and_hessian(theta, y, design, family: GlmFamily):
    """Summed canonical score ``sum (y - b'(D'theta)) D`` and ``-sum b''(D'theta) D D'``.

    Neither carries the ``1/a(phi)`` factor.
    """
    w = design @ theta
    resid = y - family.b_dot(w)
    score = design.T @ resid
    hess = -(design * family.b_ddot(w)[:, None]).T @ design
    return score, hess


@dataclass(frozen=True)
class GlmFit:
    theta: np.ndarray
    phi: float
    n_used: int
    converged: bool
    iterations: int
    score_norm: float = 0.0


def _objective(theta, y, design, family):
    w = design @ theta
    return float(np.sum(y * w - family.b(w)))


def fit_glm(y, design, family: GlmFamily, init=None) -> GlmFit:
    """Damped Newton solve of the canonical GLM score equation.

    Steps are halved (at most 30 times) until the log-likelihood does not
    decrease. Converges when the summed score has sup-norm <= 1e-8.
    """
    y = np.asarray(y, dtype=float)
    design = np.asarray(design, dtype=float)
    n, k = design.shape
    if np.linalg.matrix_rank(design) < k:
        raise SingularityError("design matrix is rank deficient")
    if family.kind == "bernoulli" and np.any((y != 0) & (y != 1)):
        raise ConfigurationError("bernoulli response must be 0/1")
    if family.kind == "poisson" and np.any((y < 0) | (y != np.round(y))):
        raise ConfigurationError("poisson response must be a non-negative integer")

    if init is not None:
        theta = np.asarray(init, dtype=float).copy()
    elif family.kind == "gaussian":
        theta = np.linalg.lstsq(design, y, rcond=None)[0]
    else:
        theta = np.zeros(k)
    obj = _objective(theta, y, design, family)
    it = 0
    score, hess = score_and_hessian(theta, y, design, family)
    while np.max(np.abs(score)) > NEWTON_TOL:
        if it >= NEWTON_MAX_ITER:
            raise ConvergenceError(
                f"GLM Newton did not converge in {NEWTON_MAX_ITER} iterations",
                last_iterate=theta,
            )
        it += 1
        try:
            step = np.linalg.solve(-hess, score)
        except np.linalg.LinAlgError:
            raise SingularityError("singular GLM information matrix") from None
        norm = np.max(np.abs(score))
        slack = 1e-12 * (1.0 + abs(obj))
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + step
            cand_obj = _objective(cand, y, design, family)
            cand_score, cand_hess = score_and_hessian(cand, y, design, family)
            if cand_obj >= obj or np.max(np.abs(step)) < 1e-15:
                break
            # near the optimum the gain is below rounding; accept if the score shrank
            if cand_obj >= obj - slack and np.max(np.abs(cand_score)) < norm:
                break
            step = 0.5 * step
        theta, obj = cand, cand_obj
        score, hess = cand_score, cand_hess
        if it > 3 and np.max(np.abs(step)) < 1e-14 * (1 + np.max(np.abs(theta))):
            # stalled at the floating point floor
            break
    score_norm = float(np.max(np.abs(score)))
    if family.kind == "gaussian":
        resid = y - design @ theta
        dof = n - k
        if dof <= 0:
            raise SingularityError("no residual degrees of freedom for the dispersion")
        phi = float(resid @ resid / dof)
    else:
        phi = 1.0
    return GlmFit(theta=theta, phi=phi, n_used=n, converged=score_norm <= NEWTON_TOL,
                  iterations=it, score_norm=score_norm)


def fit_complete_case(data: ObservationSet, family: GlmFamily) -> GlmFit:
    """GLM fit on the rows with the covariate detected."""
    det = data.detected
    n1 = int(det.sum())
    if n1 < data.p + 3:
        raise SingularityError(
            f"complete-case fit needs at least {data.p + 3} detected rows, got {n1}"
        )
    design = data.layout.design_z(data.x[det], NEG_LOG.forward(data.v[det]))
    return fit_glm(data.y[det], design, family)

"""Kaplan-Meier estimation of the residual distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """Right-continuous step CDF given by its jump points and masses.

    The masses may sum to less than one when the largest residual is censored;
    the missing mass is kept as is, never renormalised.
    """

    jump_points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.jump_points, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        if pts.shape != m.shape or pts.ndim != 1:
            raise ValueError("jump_points and masses must be 1-d arrays of equal length")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("jump points must be strictly increasing")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        if m.sum() > 1 + 1e-12:
            raise ValueError("total mass exceeds one")
        object.__setattr__(self, "jump_points", pts)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "_cum", np.cumsum(m))

    @property
    def total_mass(self) -> float:
        return float(self._cum[-1]) if len(self._cum) else 0.0

    def cdf(self, t):
        """Evaluate the CDF; scalar in, scalar out."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_points, t_arr, side="right")
        vals = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return float(vals) if t_arr.ndim == 0 else vals

    def restricted_jumps(self, lower: float, upper: float):
        """Jumps ``t`` with ``lower < t <= upper`` and their masses."""
        if not lower < upper:
            raise ValueError("lower must be below upper")
        lo = np.searchsorted(self.jump_points, lower, side="right")
        hi = np.searchsorted(self.jump_points, upper, side="right")
        return self.jump_points[lo:hi], self.masses[lo:hi]

    def shifted(self, c: float) -> "StepDistribution":
        return StepDistribution(self.jump_points + c, self.masses)

    def scaled(self, factor: float) -> "StepDistribution":
        return StepDistribution(self.jump_points, self.masses * factor)


def at_risk(residuals, s):
    """``H_n(s)``: fraction of residuals at or beyond ``s``."""
    e = np.sort(np.asarray(residuals, dtype=float))
    s = np.asarray(s, dtype=float)
    return (len(e) - np.searchsorted(e, s, side="left")) / len(e)


def _event_table(residuals, delta):
    e = np.asarray(residuals, dtype=float)
    d = np.asarray(delta)
    if e.shape != d.shape or e.ndim != 1 or len(e) == 0:
        raise ValueError("residuals and delta must be non-empty 1-d arrays of equal length")
    if not np.any(d == 1):
        raise EstimationError("every residual is censored")
    times, counts = np.unique(e[d == 1], return_counts=True)
    # at-risk counts include censorings tied with the event time
    risk = len(e) - np.searchsorted(np.sort(e), times, side="left")
    return times, counts, risk


def km_fit(residuals, delta) -> StepDistribution:
    """Product-limit estimate of the residual CDF.

    Each detected residual contributes its own factor ``1 - 1/R``, so ``d``
    events tied at one value contribute ``(1 - 1/R)^d``. Censorings tied with
    an event are still at risk at that value. On tie-free data this is the
    usual Kaplan-Meier estimate.
    """
    times, counts, risk = _event_table(residuals, delta)
    surv = np.cumprod((1.0 - 1.0 / risk) ** counts)
    masses = -np.diff(np.concatenate([[1.0], surv]))
    keep = masses > 0
    return StepDistribution(times[keep], masses[keep])


def nelson_aalen(residuals, delta):
    """Jump points and cumulative hazard ``sum_{e_k <= t} d_k / R_k``."""
    times, counts, risk = _event_table(residuals, delta)
    return times, np.cumsum(counts / risk)

"""Substitution estimators used as comparison baselines.

Each rule fills the below-limit covariate values on the Z scale and refits an
ordinary GLM with design ``(1, X, Z)``. The complete-case estimator is
re-exported from :mod:`lodreg.family`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import NEG_LOG, LinearPredictorLayout, ObservationSet, Transformation
from .errors import ConfigurationError
from .family import GlmFamily, GlmFit, fit_complete_case, fit_glm, get_family

__all__ = [
    "FilledData",
    "SubstitutionRule",
    "fit_complete_case",
    "fit_full_data",
    "fit_substitution",
    "substitute",
]

RULE_KINDS = ("at_L", "at_L_over_sqrt2", "at_zero", "conditional_mean")


@dataclass(frozen=True)
class SubstitutionRule:
    kind: str
    conditional_mean_value: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigurationError(f"unknown substitution rule {self.kind!r}")
        if self.kind == "conditional_mean" and self.conditional_mean_value is None:
            raise ConfigurationError("conditional_mean substitution needs a value for E(Z | Z < L)")

    def value(self, limit: float) -> float:
        if self.kind == "at_L":
            return limit
        if self.kind == "at_L_over_sqrt2":
            return limit / math.sqrt(2.0)
        if self.kind == "at_zero":
            return 0.0
        v = float(self.conditional_mean_value)
        if not 0.0 < v < limit:
            raise ConfigurationError(
                f"E(Z | Z < L) must lie in (0, {limit}), got {v}"
            )
        return v


@dataclass(frozen=True, eq=False)
class FilledData:
    """Fully observed data on the Z scale; ``delta`` marks the original detections."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    limit: float

    def design(self) -> np.ndarray:
        return LinearPredictorLayout(self.x.shape[1]).design_z(self.x, self.z)


def substitute(data: ObservationSet | FilledData, rule: SubstitutionRule,
               transform: Transformation = NEG_LOG) -> FilledData:
    if isinstance(data, FilledData):
        z = data.z.copy()
        z[data.delta == 0] = rule.value(data.limit)
        return FilledData(data.y, data.x, z, data.delta, data.limit)
    limit = float(transform.forward(data.c))
    z = np.where(data.detected, transform.forward(data.v), rule.value(limit))
    return FilledData(np.asarray(data.y), np.asarray(data.x), z,
                      np.asarray(data.delta), limit)


def fit_substitution(data: ObservationSet, rule: SubstitutionRule,
                     family: GlmFamily | str) -> GlmFit:
    filled = substitute(data, rule)
    return fit_glm(filled.y, filled.design(), get_family(family))


def fit_full_data(y, x, z, family: GlmFamily | str) -> GlmFit:
    """GLM fit with the latent covariate fully observed."""
    x = np.asarray(x, dtype=float)
    design = LinearPredictorLayout(x.shape[1]).design_z(x, z)
    return fit_glm(y, design, get_family(family))

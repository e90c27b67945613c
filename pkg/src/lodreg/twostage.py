"""End-to-end two-stage estimator.

Stage 1 fits the nuisance quantities: the dispersion from the complete cases,
the AFT slopes by Gehan ranks and the residual law by Kaplan-Meier. Stage 2
solves the pseudo-likelihood equation starting from the complete-case
coefficients. Bootstrap replicates and the CLI both call
:func:`fit_two_stage`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .aft import AftFit, fit_gehan
from .data import ObservationSet
from .family import GlmFamily, GlmFit, fit_complete_case, get_family
from .km import StepDistribution, km_fit
from .pseudo import NuisanceBundle, PseudoFitResult, solve_pseudo


@dataclass(frozen=True, eq=False)
class FitResult:
    theta: np.ndarray
    complete_case: GlmFit
    aft: AftFit
    eta: StepDistribution
    nuisance: NuisanceBundle
    pseudo: PseudoFitResult

    @property
    def converged(self) -> bool:
        return self.pseudo.converged


def default_tau(aft: AftFit) -> float:
    """Largest residual among subjects with the covariate detected."""
    return float(np.max(aft.residuals[aft.delta == 1]))


def fit_nuisance(data: ObservationSet, family: GlmFamily, tau: float | None = None):
    cc = fit_complete_case(data, family)
    aft = fit_gehan(data)
    eta = km_fit(aft.residuals, data.delta)
    bundle = NuisanceBundle(
        phi_hat=cc.phi,
        alpha_hat=aft.alpha,
        eta_hat=eta,
        tau=default_tau(aft) if tau is None else float(tau),
        c=data.c,
    )
    return cc, aft, bundle


def fit_two_stage(data: ObservationSet, family: GlmFamily | str,
                  tau: float | None = None) -> FitResult:
    family = get_family(family)
    cc, aft, bundle = fit_nuisance(data, family, tau)
    pseudo = solve_pseudo(data, bundle, family, init=cc.theta)
    return FitResult(
        theta=pseudo.theta,
        complete_case=cc,
        aft=aft,
        eta=bundle.eta_hat,
        nuisance=bundle,
        pseudo=pseudo,
    )

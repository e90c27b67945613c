"""Regression with a covariate left-censored at a limit of detection.

A generalized linear model ``g(E Y) = beta_0 + X' beta + gamma Z`` is fitted
when ``Z`` is only known to lie below a detection limit for some subjects.
The two-stage estimator models ``T = -log Z`` with an accelerated failure time
model (Gehan rank slopes, Kaplan-Meier residual law) and then maximises a
pseudo-likelihood that integrates the censored covariate out.
"""

__version__ = "0.1.0"

from .aft import AftFit, fit_gehan, gehan_objective, gehan_subgradient
from .baselines import SubstitutionRule, fit_full_data, fit_substitution, substitute
from .bootstrap import BootstrapResult, bootstrap, wald_interval
from .data import NEG_LOG, LinearPredictorLayout, ObservationSet, Transformation, load_csv
from .family import BERNOULLI, GAUSSIAN, POISSON, GlmFamily, fit_complete_case, fit_glm, get_family
from .gof import ScoreProcess, export_gof_plot_data, martingale_residuals, score_process
from .km import StepDistribution, km_fit, nelson_aalen
from .pseudo import NuisanceBundle, pseudo_loglik, pseudo_score, solve_pseudo
from .simulation import MonteCarloReport, SimScenario, run_study
from .twostage import FitResult, fit_two_stage

__all__ = [
    "AftFit", "BERNOULLI", "BootstrapResult", "FitResult", "GAUSSIAN", "GlmFamily",
    "LinearPredictorLayout", "MonteCarloReport", "NEG_LOG", "NuisanceBundle",
    "ObservationSet", "POISSON", "ScoreProcess", "SimScenario", "StepDistribution",
    "SubstitutionRule", "Transformation", "bootstrap", "export_gof_plot_data",
    "fit_complete_case", "fit_full_data", "fit_gehan", "fit_glm", "fit_substitution",
    "fit_two_stage", "gehan_objective", "gehan_subgradient", "get_family", "km_fit",
    "load_csv", "martingale_residuals", "nelson_aalen", "pseudo_loglik", "pseudo_score",
    "run_study", "score_process", "solve_pseudo", "substitute", "wald_interval",
]

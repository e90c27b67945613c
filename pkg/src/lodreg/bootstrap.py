"""Nonparametric bootstrap for the two-stage estimator.

Each replicate resamples whole rows and reruns both stages through
:func:`lodreg.twostage.fit_two_stage`. Replicate ``b`` draws its rows from
the stream keyed by ``(seed, b)``, so results do not depend on execution
order or on the number of workers.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._rng import stream
from .data import ObservationSet
from .errors import BootstrapDegradedWarning, EstimationError, LodError
from .family import GlmFamily, get_family
from .twostage import fit_two_stage

MIN_BOOT = 50
WARN_FAIL_RATE = 0.05
MAX_FAIL_RATE = 0.5


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    theta_hat: np.ndarray
    boot_cov: np.ndarray
    n_boot: int
    n_failed: int
    seed: int
    replicates: np.ndarray
    warning: str | None = None

    @property
    def boot_sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.boot_cov))


def resample_indices(n: int, seed: int, replicate: int) -> np.ndarray:
    return stream(seed, "bootstrap", replicate).integers(0, n, size=n)


def _replicate(data: ObservationSet, family: GlmFamily, seed: int, b: int, tau):
    idx = resample_indices(data.n, seed, b)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_two_stage(data.take(idx), family, tau=tau)
    except (LodError, np.linalg.LinAlgError, FloatingPointError):
        return None
    return fit.theta


def _run_chunk(args):
    data, family, seed, indices, tau = args
    return [_replicate(data, family, seed, b, tau) for b in indices]


def bootstrap(data: ObservationSet, family: GlmFamily | str, n_boot: int = 200,
              seed: int = 0, theta_hat=None, workers: int = 1,
              tau: float | None = None) -> BootstrapResult:
    """Bootstrap covariance of the two-stage estimate.

    Failed replicates are dropped and counted. More than 5% failures attach a
    warning; more than 50% raise :class:`EstimationError`.
    """
    family = get_family(family)
    if n_boot < MIN_BOOT:
        raise ValueError(f"n_boot must be at least {MIN_BOOT}")
    if theta_hat is None:
        theta_hat = fit_two_stage(data, family, tau=tau).theta
    if workers > 1:
        chunks = np.array_split(np.arange(n_boot), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(data, family, seed, c, tau) for c in chunks])
            reps = [r for part in parts for r in part]
    else:
        reps = [_replicate(data, family, seed, b, tau) for b in range(n_boot)]
    ok = [r for r in reps if r is not None]
    n_failed = n_boot - len(ok)
    if n_failed > MAX_FAIL_RATE * n_boot:
        raise EstimationError(f"{n_failed} of {n_boot} bootstrap replicates failed")
    message = None
    if n_failed > WARN_FAIL_RATE * n_boot:
        message = f"{n_failed} of {n_boot} bootstrap replicates failed"
        warnings.warn(message, BootstrapDegradedWarning, stacklevel=2)
    replicates = np.array(ok)
    cov = np.atleast_2d(np.cov(replicates, rowvar=False, ddof=1))
    cov = 0.5 * (cov + cov.T)
    return BootstrapResult(
        theta_hat=np.asarray(theta_hat, dtype=float),
        boot_cov=cov,
        n_boot=n_boot,
        n_failed=n_failed,
        seed=seed,
        replicates=replicates,
        warning=message,
    )


def wald_interval(result: BootstrapResult, level: float = 0.95) -> np.ndarray:
    """Per-coefficient ``theta_hat -/+ z sd`` intervals, shape ``(k, 2)``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = norm.ppf(0.5 * (1.0 + level))
    half = z * result.boot_sd
    return np.column_stack([result.theta_hat - half, result.theta_hat + half])

"""Goodness of fit for the AFT model of the transformed covariate.

The check uses cumulative sums of martingale residuals ordered by a covariate,

    W(x) = n^{-1/2} sum_i 1(X_ij <= x) M_i,

and compares its sup-norm with normal-multiplier realisations
``n^{-1/2} sum_i G_i u_i(x)``. Each subject term ``u_i`` is the residual
martingale integrated against ``1(X_ij <= x)`` centred by its at-risk average,
minus the first-order effect of estimating the slopes. Without those two
corrections the realisations are far more variable than the observed path and
the test almost never rejects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import stream
from .aft import AftFit, _subgradient_from_residuals
from .data import ObservationSet
from .errors import DegenerateProcessError
from .km import nelson_aalen

MIN_SIM_PVALUE = 100


@dataclass(frozen=True, eq=False)
class ScoreProcess:
    covariate_index: int | None
    eval_points: np.ndarray
    observed_path: np.ndarray
    simulated_paths: np.ndarray
    p_value: float

    @property
    def n_sim(self) -> int:
        return self.simulated_paths.shape[0]

    @property
    def observed_sup(self) -> float:
        return float(np.max(np.abs(self.observed_path)))


def martingale_residuals(fit: AftFit, delta=None) -> np.ndarray:
    """``M_i = delta_i - Lambda(e_i)`` with the residual Nelson-Aalen hazard.

    ``delta`` defaults to the censoring indicators stored on ``fit``.
    """
    e = np.asarray(fit.residuals, dtype=float)
    d = np.asarray(fit.delta if delta is None else delta, dtype=float)
    return _martingale(e, d)


def _martingale(e, d):
    times, cumhaz = nelson_aalen(e, d)
    idx = np.searchsorted(times, e, side="right")
    lam = np.where(idx > 0, cumhaz[np.maximum(idx - 1, 0)], 0.0)
    return d - lam


def _influence(xs, es, ds, ms, eval_points) -> np.ndarray:
    """Per-subject terms ``int [1(X_i <= x) - E(x, t)] dM_i(t)``, shape ``(n, m)``.

    ``E(x, t)`` is the fraction of residuals at risk at ``t`` whose covariate
    is at most ``x``. Centring by it accounts for estimating the baseline
    hazard; the columns sum to the observed path exactly.
    """
    times, cumhaz = nelson_aalen(es, ds)
    dlam = np.diff(np.concatenate([[0.0], cumhaz]))
    below = xs[None, :] <= eval_points[:, None]                # (m, n)
    at_risk = es[None, :] >= times[:, None]                    # (K, n)
    ex = (below.astype(float) @ at_risk.T) / at_risk.sum(axis=1)  # (m, K)
    cum = np.cumsum(ex * dlam[None, :], axis=1)
    k_i = np.searchsorted(times, es, side="right")             # events at or before e_i
    comp = np.where(k_i > 0, cum[:, np.maximum(k_i - 1, 0)], 0.0)
    jump = np.where(ds > 0, ex[:, np.maximum(k_i - 1, 0)], 0.0)
    return (below * ms[None, :] - jump + comp).T


def _gehan_influence(x, e, d) -> np.ndarray:
    """Per-subject terms of the Gehan estimating function, shape ``(n, p)``.

    Their mean equals the Gehan subgradient at the fitted slopes.
    """
    n = len(e)
    times, cumhaz = nelson_aalen(e, d)
    dlam = np.diff(np.concatenate([[0.0], cumhaz]))
    at_risk = e[None, :] >= times[:, None]                     # (K, n)
    r = at_risk.sum(axis=1) / n
    xbar = (at_risk @ x) / at_risk.sum(axis=1)[:, None]        # (K, p)
    k_i = np.searchsorted(times, e, side="right")
    jump_idx = np.maximum(k_i - 1, 0)
    jump = np.where((d > 0)[:, None], r[jump_idx, None] * (x - xbar[jump_idx]), 0.0)
    # compensator: sum over event times up to e_i of r (x_i - xbar) dLambda
    w = (r * dlam)[:, None]
    cum_w = np.cumsum(r * dlam)
    cum_wx = np.cumsum(w * xbar, axis=0)
    comp = np.where((k_i > 0)[:, None],
                    cum_w[jump_idx, None] * x - cum_wx[jump_idx], 0.0)
    return jump - comp


def _alpha_correction(data: ObservationSet, fit: AftFit, order, last) -> np.ndarray:
    """First-order effect of estimating the slopes on each subject's term.

    The slopes of the Gehan estimating function and of the observed path are
    central differences with a step of order ``n^{-1/2}`` on the residual
    scale.
    """
    n, p = data.n, data.p
    x = np.asarray(data.x, dtype=float)
    v = np.asarray(data.v, dtype=float)
    d = np.asarray(data.delta, dtype=float)
    alpha = np.asarray(fit.alpha, dtype=float)
    e = v - x @ alpha
    scale = 1.0 / np.sqrt(n)

    def path(a):
        ea = v - x @ a
        return scale * np.cumsum(_martingale(ea, d)[order])[last]

    sd_e = np.std(e)
    slope_u = np.zeros((p, p))
    slope_w = np.zeros((len(last), p))
    for j in range(p):
        sd_x = np.std(x[:, j])
        if sd_x == 0:
            continue
        h = sd_e / (sd_x * np.sqrt(n))
        step = np.zeros(p)
        step[j] = h
        slope_u[:, j] = (_subgradient_from_residuals(v - x @ (alpha + step), x, d)
                         - _subgradient_from_residuals(v - x @ (alpha - step), x, d)) / (2 * h)
        slope_w[:, j] = (path(alpha + step) - path(alpha - step)) / (2 * h)
    q = _gehan_influence(x, e, d)[order]
    sens = np.linalg.lstsq(slope_u.T, slope_w.T, rcond=None)[0]  # A^{-T} B^T
    return scale * (q @ sens)


def score_process(data: ObservationSet, fit: AftFit, covariate_index: int | None = None,
                  n_sim: int = 500, seed: int = 0, covariate=None) -> ScoreProcess:
    """Observed and simulated score processes for one covariate.

    Parameters
    ----------
    data : ObservationSet
        Data the AFT model was fitted on.
    fit : AftFit
        Gehan fit on ``data``.
    covariate_index : int, optional
        Column of ``data.x`` that orders the residuals.
    n_sim : int
        Number of multiplier realisations (at least 100).
    seed : int
        Realisation ``s`` uses its own stream keyed by ``(seed, s)``.
    covariate : array, optional
        An explicit ordering variable, e.g. a covariate left out of the AFT
        model. Overrides ``covariate_index``.
    """
    if n_sim < MIN_SIM_PVALUE:
        raise ValueError(f"n_sim must be at least {MIN_SIM_PVALUE}")
    if covariate is None:
        if covariate_index is None:
            raise ValueError("give covariate_index or covariate")
        xj = np.asarray(data.x[:, covariate_index], dtype=float)
    else:
        xj = np.asarray(covariate, dtype=float)
        if xj.shape != (data.n,):
            raise ValueError("covariate must have one value per subject")
    if np.all(xj == xj[0]):
        raise DegenerateProcessError("covariate is constant; its score process is identically zero")

    e = np.asarray(fit.residuals, dtype=float)
    d = np.asarray(data.delta, dtype=float)
    m = martingale_residuals(fit, d)
    n = data.n
    # canonical subject order, so multipliers do not follow the row order
    order = np.lexsort((d, e, xj))
    xs, es, ds, ms = xj[order], e[order], d[order], m[order]
    eval_points, first = np.unique(xs, return_index=True)
    last = np.append(first[1:], n) - 1

    scale = 1.0 / np.sqrt(n)
    observed = scale * np.cumsum(ms)[last]
    influence = _influence(xs, es, ds, ms, eval_points)
    if data.p:
        influence = influence - _alpha_correction(data, fit, order, last)
    sims = np.empty((n_sim, len(eval_points)))
    for s in range(n_sim):
        g = stream(seed, "gof", s).standard_normal(n)
        sims[s] = scale * (g @ influence)

    obs_sup = np.max(np.abs(observed))
    sim_sup = np.max(np.abs(sims), axis=1)
    exceed = int(np.sum(sim_sup >= obs_sup))
    return ScoreProcess(
        covariate_index=covariate_index if covariate is None else None,
        eval_points=eval_points,
        observed_path=observed,
        simulated_paths=sims,
        p_value=(1 + exceed) / (n_sim + 1),
    )


def export_gof_plot_data(process: ScoreProcess, n_paths: int = 50) -> dict:
    """Columns ``x``, ``observed`` and ``sim_1`` ... ``sim_k`` for plotting."""
    if not 0 <= n_paths <= process.n_sim:
        raise ValueError(f"n_paths must lie in [0, {process.n_sim}]")
    cols = {"x": process.eval_points, "observed": process.observed_path}
    for k in range(n_paths):
        cols[f"sim_{k + 1}"] = process.simulated_paths[k]
    return cols

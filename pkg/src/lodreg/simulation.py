"""Monte Carlo comparison of the two-stage estimator with its competitors.

The generative design:

* ``X1 ~ Bernoulli(0.5)``, ``X2 ~ N(1, 1)`` restricted to ``[1 - 3, 1 + 3]``;
* ``T = a0 + a1 X1 + a2 X2 + e`` with ``e ~ 0.5 N(0, 1/8^2) + 0.5 N(0.5, 1/10^2)``;
* ``Z = exp(-T)`` and ``g(E Y) = b0 + b1 X1 + b2 X2 + gamma Z``;
* the limit is the ``1 - censoring`` quantile of ``T``.

Every replicate draws from its own keyed stream, so a report is a pure function
of the scenario.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from ._rng import stream
from .baselines import SubstitutionRule, fit_full_data, fit_substitution
from .bootstrap import bootstrap, wald_interval
from .data import NEG_LOG, ObservationSet
from .errors import ConfigurationError, ConditionNineWarning, LodError
from .family import fit_complete_case, get_family
from .twostage import fit_two_stage

METHODS = ("full_data", "two_stage", "complete_case", "sub_L", "sub_Lsqrt2",
           "sub_zero", "sub_condmean")
METHOD_LABELS = {
    "full_data": "Full data",
    "two_stage": "Two-stage",
    "complete_case": "Complete case",
    "sub_L": "L",
    "sub_Lsqrt2": "L/sqrt2",
    "sub_zero": "Zero",
    "sub_condmean": "E(Z|Z<L)",
}
_RULES = {"sub_L": "at_L", "sub_Lsqrt2": "at_L_over_sqrt2", "sub_zero": "at_zero",
          "sub_condmean": "conditional_mean"}
COEF_NAMES = ("beta0", "beta1", "beta2", "gamma")

ORACLE_DRAWS = 10**7
_CHUNK = 10**6


@dataclass(frozen=True)
class SimScenario:
    family: str = "gaussian"
    theta_true: tuple = (-1.0, 0.5, -1.0, 2.0)
    alpha_true: tuple = (0.25, 0.25, -0.5)
    mix_weights: tuple = (0.5, 0.5)
    mix_means: tuple = (0.0, 0.5)
    mix_sds: tuple = (1 / 8, 1 / 10)
    x1_prob: float = 0.5
    x2_mean: float = 1.0
    x2_sd: float = 1.0
    x2_trunc: float = 3.0
    noise_sd: float = 1.0
    n: int = 400
    target_censoring: float = 0.30
    n_reps: int = 200
    n_boot: int = 100
    seed: int = 20240101

    def __post_init__(self):
        get_family(self.family)
        if not 0.0 < self.target_censoring < 1.0:
            raise ConfigurationError("target censoring must lie in (0, 1)")
        if not math.isclose(sum(self.mix_weights), 1.0, abs_tol=1e-12):
            raise ConfigurationError("mixture weights must sum to one")
        if self.n < 10 or self.n_reps < 1:
            raise ConfigurationError("need n >= 10 and at least one replicate")

    def echo(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SimDataset:
    data: ObservationSet
    z_latent: np.ndarray
    t_latent: np.ndarray


def _draw_covariates(scenario: SimScenario, rng: np.random.Generator, n: int):
    x1 = (rng.random(n) < scenario.x1_prob).astype(float)
    lo = scenario.x2_mean - scenario.x2_trunc * scenario.x2_sd
    hi = scenario.x2_mean + scenario.x2_trunc * scenario.x2_sd
    x2 = rng.normal(scenario.x2_mean, scenario.x2_sd, n)
    bad = (x2 < lo) | (x2 > hi)
    while np.any(bad):
        x2[bad] = rng.normal(scenario.x2_mean, scenario.x2_sd, int(bad.sum()))
        bad = (x2 < lo) | (x2 > hi)
    return x1, x2


def _draw_errors(scenario: SimScenario, rng: np.random.Generator, n: int):
    comp = rng.choice(len(scenario.mix_weights), size=n, p=scenario.mix_weights)
    means = np.asarray(scenario.mix_means)[comp]
    sds = np.asarray(scenario.mix_sds)[comp]
    return means + sds * rng.standard_normal(n)


def _draw_t(scenario: SimScenario, rng: np.random.Generator, n: int):
    x1, x2 = _draw_covariates(scenario, rng, n)
    a0, a1, a2 = scenario.alpha_true
    t = a0 + a1 * x1 + a2 * x2 + _draw_errors(scenario, rng, n)
    return x1, x2, t


def _latent_t_sample(scenario: SimScenario, n_draws: int, purpose: str) -> np.ndarray:
    chunks = []
    for k, start in enumerate(range(0, n_draws, _CHUNK)):
        m = min(_CHUNK, n_draws - start)
        chunks.append(_draw_t(scenario, stream(scenario.seed, purpose, k), m)[2])
    return np.concatenate(chunks)


def calibrate_limit(scenario: SimScenario, n_draws: int = ORACLE_DRAWS):
    """Transformed limit ``C`` with ``P(T > C)`` equal to the target, and ``L = exp(-C)``."""
    t = _latent_t_sample(scenario, n_draws, "calibrate")
    c = float(np.quantile(t, 1.0 - scenario.target_censoring))
    return c, float(NEG_LOG.forward(c))


def conditional_mean_oracle(scenario: SimScenario, c: float,
                            n_draws: int = ORACLE_DRAWS) -> float:
    """Monte Carlo ``E(Z | Z < L) = E(exp(-T) | T > C)``."""
    t = _latent_t_sample(scenario, n_draws, "condmean")
    return float(np.mean(np.exp(-t[t > c])))


def generate_dataset(scenario: SimScenario, c: float, rep_index: int) -> SimDataset:
    rng = stream(scenario.seed, "dataset", rep_index)
    n = scenario.n
    x1, x2, t = _draw_t(scenario, rng, n)
    z = NEG_LOG.forward(t)
    b0, b1, b2, g = scenario.theta_true
    lp = b0 + b1 * x1 + b2 * x2 + g * z
    kind = get_family(scenario.family).kind
    if kind == "gaussian":
        y = lp + scenario.noise_sd * rng.standard_normal(n)
    elif kind == "bernoulli":
        y = (rng.random(n) < expit(lp)).astype(float)
    else:
        y = rng.poisson(np.exp(lp)).astype(float)
    data = ObservationSet.from_latent(y, np.column_stack([x1, x2]), t, c,
                                      x_names=("x1", "x2"))
    return SimDataset(data=data, z_latent=z, t_latent=t)


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    """Per-replicate estimates and the table summaries derived from them.

    ``estimates[m]`` is ``(n_reps, 4)`` with NaN rows for failed replicates.
    ``boot_var`` and ``cover90``/``cover95`` refer to the two-stage method.
    """

    scenario: SimScenario
    c: float
    limit: float
    conditional_mean: float
    estimates: dict
    boot_var: np.ndarray
    cover90: np.ndarray
    cover95: np.ndarray
    censoring: np.ndarray
    floored: np.ndarray

    def _ok(self, method):
        est = self.estimates[method]
        return est[~np.isnan(est).any(axis=1)]

    def n_ok(self, method) -> int:
        return len(self._ok(method))

    def n_failed(self, method) -> int:
        return len(self.estimates[method]) - self.n_ok(method)

    def bias(self, method) -> np.ndarray:
        return self._ok(method).mean(axis=0) - np.asarray(self.scenario.theta_true)

    def variance(self, method) -> np.ndarray:
        return self._ok(method).var(axis=0, ddof=1)

    def bias_se(self, method) -> np.ndarray:
        return np.sqrt(self.variance(method) / self.n_ok(method))

    def mean_boot_var(self) -> np.ndarray:
        bv = self.boot_var[~np.isnan(self.boot_var).any(axis=1)]
        return bv.mean(axis=0) if len(bv) else np.full(4, np.nan)

    def coverage(self, level: float) -> np.ndarray:
        cov = {0.90: self.cover90, 0.95: self.cover95}[level]
        ok = ~np.isnan(cov).any(axis=1)
        return cov[ok].mean(axis=0) if ok.any() else np.full(4, np.nan)

    def rows(self):
        """One dict per method with bias, var and (two-stage only) bootstrap columns."""
        has_boot = not np.all(np.isnan(self.boot_var))
        out = []
        for m in METHODS:
            row = {"method": m, "n_ok": self.n_ok(m)}
            bias = self.bias(m)
            var = self.variance(m)
            for j, name in enumerate(COEF_NAMES):
                row[f"bias_{name}"] = bias[j]
            for j, name in enumerate(COEF_NAMES):
                row[f"var_{name}"] = var[j]
            boot = self.mean_boot_var() if (m == "two_stage" and has_boot) else [None] * 4
            c90 = self.coverage(0.90) if (m == "two_stage" and has_boot) else [None] * 4
            c95 = self.coverage(0.95) if (m == "two_stage" and has_boot) else [None] * 4
            for j, name in enumerate(COEF_NAMES):
                row[f"bootvar_{name}"] = boot[j]
            for j, name in enumerate(COEF_NAMES):
                row[f"cr90_{name}"] = c90[j]
            for j, name in enumerate(COEF_NAMES):
                row[f"cr95_{name}"] = c95[j]
            out.append(row)
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned text table: bias and variance rows per method, one column per coefficient."""
        header = f"{'':<15}{'':<16}" + "".join(f"{n:>10}" for n in COEF_NAMES)
        lines = [f"family={self.scenario.family} n={self.scenario.n} "
                 f"reps={self.scenario.n_reps} censoring={self.censoring.mean():.3f}",
                 header]

        def line(label, stat, vals, fmt="{:>10.3f}"):
            cells = "".join(fmt.format(v) for v in vals)
            lines.append(f"{label:<15}{stat:<16}{cells}")

        has_boot = not np.all(np.isnan(self.boot_var))
        for m in METHODS:
            label = METHOD_LABELS[m]
            line(label, "bias", self.bias(m))
            if m in ("full_data", "two_stage", "complete_case"):
                line("", "var", self.variance(m))
            if m == "two_stage" and has_boot:
                line("", "bootstrap var", self.mean_boot_var())
                line("", "90% CR (%)", 100 * self.coverage(0.90), "{:>10.1f}")
                line("", "95% CR (%)", 100 * self.coverage(0.95), "{:>10.1f}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _replicate(args):
    scenario, c, condmean, r = args
    family = get_family(scenario.family)
    sim = generate_dataset(scenario, c, r)
    data = sim.data
    nan4 = np.full(4, np.nan)
    est = {}
    floored = 0

    def attempt(fn):
        try:
            return np.asarray(fn(), dtype=float)
        except (LodError, np.linalg.LinAlgError):
            return nan4

    est["full_data"] = attempt(
        lambda: fit_full_data(data.y, data.x, sim.z_latent, family).theta)
    est["complete_case"] = attempt(lambda: fit_complete_case(data, family).theta)
    for m, kind in _RULES.items():
        rule = SubstitutionRule(kind, condmean if kind == "conditional_mean" else None)
        est[m] = attempt(lambda rule=rule: fit_substitution(data, rule, family).theta)

    boot_var = cover90 = cover95 = nan4
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConditionNineWarning)
            fit = fit_two_stage(data, family)
        floored = fit.pseudo.floored_subjects
        est["two_stage"] = fit.theta
        if scenario.n_boot > 0:
            boot_seed = int(stream(scenario.seed, "boot-seed", r).integers(2**62))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = bootstrap(data, family, scenario.n_boot, boot_seed, theta_hat=fit.theta)
            boot_var = np.diag(res.boot_cov)
            truth = np.asarray(scenario.theta_true)
            ci90 = wald_interval(res, 0.90)
            ci95 = wald_interval(res, 0.95)
            cover90 = ((ci90[:, 0] <= truth) & (truth <= ci90[:, 1])).astype(float)
            cover95 = ((ci95[:, 0] <= truth) & (truth <= ci95[:, 1])).astype(float)
    except (LodError, np.linalg.LinAlgError):
        est["two_stage"] = nan4
    return est, boot_var, cover90, cover95, data.censoring_rate, floored


def _run_chunk(args):
    scenario, c, condmean, reps = args
    return [_replicate((scenario, c, condmean, r)) for r in reps]


def run_study(scenario: SimScenario, c: float | None = None,
              conditional_mean: float | None = None, workers: int = 1,
              oracle_draws: int = ORACLE_DRAWS) -> MonteCarloReport:
    """Run every method on ``scenario.n_reps`` simulated data sets."""
    if c is None:
        c, _ = calibrate_limit(scenario, oracle_draws)
    limit = float(NEG_LOG.forward(c))
    if conditional_mean is None:
        conditional_mean = conditional_mean_oracle(scenario, c, oracle_draws)
    reps = np.arange(scenario.n_reps)
    if workers > 1:
        chunks = np.array_split(reps, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(scenario, c, conditional_mean, ch) for ch in chunks])
            results = [res for part in parts for res in part]
    else:
        results = [_replicate((scenario, c, conditional_mean, r)) for r in reps]

    estimates = {m: np.array([res[0][m] for res in results]) for m in METHODS}
    return MonteCarloReport(
        scenario=scenario,
        c=c,
        limit=limit,
        conditional_mean=conditional_mean,
        estimates=estimates,
        boot_var=np.array([res[1] for res in results]),
        cover90=np.array([res[2] for res in results]),
        cover95=np.array([res[3] for res in results]),
        censoring=np.array([res[4] for res in results]),
        floored=np.array([res[5] for res in results]),
    )

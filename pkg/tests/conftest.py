import json
import pathlib

import numpy as np
import pytest
from hypothesis import settings

from lodreg.data import ObservationSet
from lodreg.simulation import SimScenario, generate_dataset

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

REFERENCE = json.loads(
    (pathlib.Path(__file__).parent / "reference" / "sim_reference.json").read_text()
)


@pytest.fixture(scope="session")
def reference():
    return REFERENCE


def sim_dataset(rep=0, family="gaussian", n=400, seed=20240101):
    scenario = SimScenario(family=family, n=n, seed=seed)
    return generate_dataset(scenario, REFERENCE["c"], rep)


def sim_data(rep=0, family="gaussian", n=400, seed=20240101):
    return sim_dataset(rep, family, n, seed).data


def random_dataset(rng, n=60, p=2, censor_frac=0.3, family="gaussian"):
    """Small synthetic data set with a linear AFT covariate and the given family."""
    x = rng.normal(size=(n, p))
    t = x @ rng.normal(scale=0.5, size=p) + rng.normal(scale=0.5, size=n)
    c = float(np.quantile(t, 1 - censor_frac)) if censor_frac > 0 else float(t.max() + 1)
    lp = 0.3 + x @ rng.normal(scale=0.3, size=p) + 0.5 * np.exp(-t)
    if family == "gaussian":
        y = lp + rng.normal(size=n)
    elif family == "bernoulli":
        y = (rng.random(n) < 1 / (1 + np.exp(-lp))).astype(float)
    else:
        y = rng.poisson(np.exp(np.clip(lp, -5, 3))).astype(float)
    return ObservationSet.from_latent(y, x, t, c)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

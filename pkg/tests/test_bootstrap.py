import importlib
import warnings

import numpy as np
import pytest

from lodreg.bootstrap import (BootstrapResult, bootstrap, resample_indices, wald_interval)
from lodreg.errors import BootstrapDegradedWarning, EstimationError
from lodreg.family import GAUSSIAN
from lodreg.twostage import fit_two_stage

from conftest import random_dataset, sim_data
from oracles import ols


def fake_result(sd=1.0, theta=0.0):
    return BootstrapResult(theta_hat=np.array([theta]), boot_cov=np.array([[sd**2]]),
                           n_boot=100, n_failed=0, seed=0, replicates=np.zeros((100, 1)))


def test_wald_quantile():
    ci = wald_interval(fake_result(), 0.95)
    np.testing.assert_allclose(ci, [[-1.959964, 1.959964]], atol=1e-6)


def test_wald_nesting():
    res = BootstrapResult(theta_hat=np.array([1.0, -2.0]), boot_cov=np.diag([0.3, 2.0]),
                          n_boot=100, n_failed=0, seed=0, replicates=np.zeros((100, 2)))
    a, b = wald_interval(res, 0.90), wald_interval(res, 0.95)
    assert np.all(b[:, 0] <= a[:, 0]) and np.all(a[:, 1] <= b[:, 1])
    with pytest.raises(ValueError):
        wald_interval(res, 1.0)


def test_determinism_and_workers():
    data = sim_data(rep=0, n=150)
    a = bootstrap(data, GAUSSIAN, n_boot=50, seed=11)
    b = bootstrap(data, GAUSSIAN, n_boot=50, seed=11)
    c = bootstrap(data, GAUSSIAN, n_boot=50, seed=11, workers=2)
    assert a.boot_cov.tobytes() == b.boot_cov.tobytes() == c.boot_cov.tobytes()
    assert np.all(np.linalg.eigvalsh(a.boot_cov) >= -1e-10)
    np.testing.assert_array_equal(a.boot_cov, a.boot_cov.T)


def test_resample_indices_keyed_by_replicate():
    assert np.array_equal(resample_indices(30, 5, 7), resample_indices(30, 5, 7))
    assert not np.array_equal(resample_indices(30, 5, 7), resample_indices(30, 5, 8))


def test_replicate_uses_production_pipeline():
    data = sim_data(rep=1, n=150)
    res = bootstrap(data, GAUSSIAN, n_boot=50, seed=3)
    direct = fit_two_stage(data.take(resample_indices(data.n, 3, 0)), GAUSSIAN).theta
    assert res.replicates[0].tobytes() == direct.tobytes()


def test_uncensored_sd_matches_ols():
    rng = np.random.default_rng(4)
    data = random_dataset(rng, n=400, censor_frac=0.0)
    res = bootstrap(data, GAUSSIAN, n_boot=200, seed=1)
    _, cov = ols(np.asarray(data.y), data.layout.design(data.x, data.v))
    assert res.boot_sd[-1] == pytest.approx(np.sqrt(cov[-1, -1]), rel=0.25)


def test_minimum_replicates():
    with pytest.raises(ValueError):
        bootstrap(sim_data(rep=0, n=100), GAUSSIAN, n_boot=10)


def test_failure_accounting(monkeypatch):
    bs = importlib.import_module("lodreg.bootstrap")

    calls = {"n": 0}
    real = bs.fit_two_stage

    def flaky(data, family, tau=None):
        calls["n"] += 1
        if calls["n"] % 10 == 0:
            raise EstimationError("synthetic failure")
        return real(data, family, tau=tau)

    monkeypatch.setattr(bs, "fit_two_stage", flaky)
    data = sim_data(rep=2, n=100)
    with pytest.warns(BootstrapDegradedWarning):
        res = bs.bootstrap(data, GAUSSIAN, n_boot=60, seed=0, theta_hat=np.zeros(4))
    assert res.n_failed == 6 and res.warning

    monkeypatch.setattr(bs, "fit_two_stage",
                        lambda *a, **k: (_ for _ in ()).throw(EstimationError("always")))
    with pytest.raises(EstimationError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bs.bootstrap(data, GAUSSIAN, n_boot=60, seed=0, theta_hat=np.zeros(4))

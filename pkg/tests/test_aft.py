import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lodreg.aft import fit_gehan, gehan_objective, gehan_subgradient
from lodreg.data import ObservationSet
from lodreg.errors import EstimationError

from conftest import random_dataset, sim_data
from oracles import gehan_bruteforce, grid_minimum


def two_point():
    # the two-point example, duplicated so that n >= p + 3; every pairwise
    # average is unchanged, so the loss is still |1 - a| / 4
    return ObservationSet(y=np.zeros(4), x=np.array([[0.0], [1.0], [0.0], [1.0]]),
                          v=[0.0, 1.0, 0.0, 1.0], delta=np.ones(4), c=5.0)


def test_two_point_objective_and_subgradient():
    x = np.array([[0.0], [1.0]])
    v = np.array([0.0, 1.0])
    data = two_point()
    for a in (-1.0, 0.0, 0.5, 1.0, 2.5):
        assert gehan_bruteforce([a], x, v, np.ones(2)) == pytest.approx(abs(1 - a) / 4, abs=1e-15)
        assert gehan_objective([a], data) == pytest.approx(abs(1 - a) / 4, abs=1e-15)
    np.testing.assert_allclose(gehan_subgradient([0.0], data), [-0.25], atol=1e-15)
    fit = fit_gehan(data)
    assert fit.alpha[0] == pytest.approx(1.0, abs=1e-9)


def test_all_equal_residuals_give_zero():
    x = np.arange(6.0)[:, None]
    data = ObservationSet(y=np.zeros(6), x=x, v=2.0 * np.arange(6.0), delta=np.ones(6), c=20.0)
    assert gehan_objective([2.0], data) == 0.0


def test_all_censored_subgradient_zero_and_fit_fails():
    x = np.arange(5.0)[:, None]
    data = ObservationSet(y=np.zeros(5), x=x, v=np.full(5, 1.0), delta=np.zeros(5), c=1.0)
    assert np.all(gehan_subgradient([0.3], data) == 0)
    with pytest.raises(EstimationError):
        fit_gehan(data)


def test_objective_matches_bruteforce():
    rng = np.random.default_rng(5)
    data = random_dataset(rng, n=40)
    for _ in range(20):
        a = rng.normal(size=2)
        assert gehan_objective(a, data) == pytest.approx(
            gehan_bruteforce(a, data.x, data.v, data.delta), rel=1e-12, abs=1e-15)


def test_subgradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    data = random_dataset(rng, n=60)
    h = 1e-7
    for _ in range(50):
        a = rng.normal(size=2)
        g = gehan_subgradient(a, data)
        fd = np.array([(gehan_objective(a + h * e, data) - gehan_objective(a - h * e, data))
                       / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(g, fd, atol=1e-6)


def test_convexity_on_random_chords():
    rng = np.random.default_rng(7)
    data = random_dataset(rng, n=50)
    for _ in range(100):
        a1, a2 = rng.normal(scale=2, size=(2, 2))
        lam = rng.uniform()
        mid = gehan_objective(lam * a1 + (1 - lam) * a2, data)
        assert mid <= lam * gehan_objective(a1, data) + (1 - lam) * gehan_objective(a2, data) + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_grid_oracle_minimum_n20(seed):
    rng = np.random.default_rng(100 + seed)
    data = random_dataset(rng, n=20)
    fit = fit_gehan(data)
    best, val = grid_minimum(np.asarray(data.x), np.asarray(data.v), np.asarray(data.delta),
                             fit.alpha)
    assert fit.gehan_objective <= val + 1e-12
    # the grid cannot beat the solver, and the solver is within one grid cell of it
    assert fit.gehan_objective == pytest.approx(
        gehan_objective(fit.alpha, data), abs=1e-15)
    step_bound = 1e-3 * np.abs(np.asarray(data.x)).max() * 2
    assert val - fit.gehan_objective <= step_bound


def test_local_minimum_spot_check():
    data = sim_data(rep=0)
    fit = fit_gehan(data)
    rng = np.random.default_rng(8)
    for _ in range(50):
        u = rng.normal(size=2)
        u *= 0.1 / np.linalg.norm(u)
        assert fit.gehan_objective <= gehan_objective(fit.alpha + u, data)
    assert fit.gehan_objective >= 0
    np.testing.assert_allclose(fit.residuals, data.v - data.x @ fit.alpha)


def test_location_invariance():
    data = sim_data(rep=1)
    shifted = ObservationSet(data.y, data.x, data.v + 3.0, data.delta, data.c + 3.0)
    a = fit_gehan(data).alpha
    b = fit_gehan(shifted).alpha
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_scale_equivariance():
    rng = np.random.default_rng(9)
    data = random_dataset(rng, n=80)
    x = np.array(data.x)
    x[:, 0] *= 2.0
    scaled = ObservationSet(data.y, x, data.v, data.delta, data.c)
    a = fit_gehan(data).alpha
    b = fit_gehan(scaled).alpha
    np.testing.assert_allclose([b[0] * 2.0, b[1]], a, atol=1e-8)


def test_uncensored_single_covariate_recovers_truth():
    ests = []
    for r in range(40):
        rng = np.random.default_rng(1000 + r)
        x = rng.normal(size=(400, 1))
        t = -0.5 * x[:, 0] + rng.logistic(scale=0.3, size=400)
        data = ObservationSet.from_latent(np.zeros(400), x, t, t.max() + 1)
        ests.append(fit_gehan(data).alpha[0])
    ests = np.array(ests)
    se = ests.std(ddof=1) / np.sqrt(len(ests))
    assert abs(ests.mean() + 0.5) <= 3 * se


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=12), st.floats(-2, 2))
def test_objective_nonnegative(vals, a):
    n = len(vals)
    x = np.linspace(-1, 1, n)[:, None]
    v = np.array(vals)
    data = ObservationSet(np.zeros(n), x, v, np.ones(n), c=10.0)
    assert gehan_objective([a], data) >= 0

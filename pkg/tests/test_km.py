import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lodreg.errors import EstimationError
from lodreg.km import StepDistribution, at_risk, km_fit, nelson_aalen

from oracles import km_product

HAND_E = np.array([1.0, 2.0, 3.0])
HAND_D = np.array([1, 0, 1])


def test_hand_example():
    km = km_fit(HAND_E, HAND_D)
    np.testing.assert_allclose(km.jump_points, [1.0, 3.0])
    np.testing.assert_allclose(km.masses, [1 / 3, 2 / 3], atol=1e-15)
    assert km.cdf(1.0) == pytest.approx(1 / 3)
    assert km.cdf(2.0) == pytest.approx(1 / 3)
    assert km.cdf(3.0) == pytest.approx(1.0)
    assert km.cdf(2.5) == pytest.approx(1 / 3)
    assert km.cdf(1.0 - 1e-12) == 0.0


def test_restricted_jumps():
    km = km_fit(HAND_E, HAND_D)
    pts, m = km.restricted_jumps(0.0, 2.0)
    np.testing.assert_allclose(pts, [1.0])
    np.testing.assert_allclose(m, [1 / 3])
    pts, _ = km.restricted_jumps(-10, 10)
    assert len(pts) == 2
    pts, _ = km.restricted_jumps(1.0, 10)       # open at the lower end
    np.testing.assert_allclose(pts, [3.0])
    pts, _ = km.restricted_jumps(0.0, 3.0)      # closed at the upper end
    assert len(pts) == 2
    with pytest.raises(ValueError):
        km.restricted_jumps(2.0, 1.0)


def test_no_censoring_is_ecdf():
    rng = np.random.default_rng(1)
    e = rng.normal(size=50)
    km = km_fit(e, np.ones(50))
    grid = np.linspace(-3, 3, 200)
    np.testing.assert_allclose(km.cdf(grid), [(e <= g).mean() for g in grid], atol=1e-14)


def test_defective_when_largest_censored():
    km = km_fit([1.0, 2.0, 3.0], [1, 1, 0])
    assert km.total_mass < 1
    assert km.total_mass == pytest.approx(2 / 3)


def test_all_censored_raises():
    with pytest.raises(EstimationError):
        km_fit([1.0, 2.0], [0, 0])


def test_against_product_formula_oracle():
    rng = np.random.default_rng(2)
    for _ in range(5):
        n = 80
        e = np.round(rng.normal(size=n), 1)              # plenty of ties
        d = (rng.random(n) < 0.7).astype(int)
        km = km_fit(e, d)
        ts = rng.uniform(-3, 3, 100)
        for t in ts:
            assert km.cdf(t) == pytest.approx(km_product(e, d, t), abs=1e-12)


def test_monotone_right_continuous():
    rng = np.random.default_rng(3)
    e = rng.normal(size=60)
    d = (rng.random(60) < 0.6).astype(int)
    d[0] = 1
    km = km_fit(e, d)
    grid = np.linspace(-4, 4, 2001)
    vals = km.cdf(grid)
    assert np.all(np.diff(vals) >= 0)
    for t, m in zip(km.jump_points, np.cumsum(km.masses)):
        assert km.cdf(t) == pytest.approx(m)


@given(st.floats(-5, 5))
def test_shift_equivariance(c):
    rng = np.random.default_rng(4)
    e = rng.normal(size=30)
    d = np.ones(30)
    a = km_fit(e, d)
    b = km_fit(e + c, d)
    np.testing.assert_allclose(b.jump_points, a.jump_points + c)
    np.testing.assert_allclose(b.masses, a.masses)
    np.testing.assert_allclose(a.shifted(c).jump_points, b.jump_points)


def test_at_risk_and_nelson_aalen():
    assert at_risk(HAND_E, 2.0) == pytest.approx(2 / 3)
    times, cum = nelson_aalen(HAND_E, HAND_D)
    np.testing.assert_allclose(times, [1.0, 3.0])
    np.testing.assert_allclose(cum, [1 / 3, 4 / 3])


def test_step_distribution_validation():
    with pytest.raises(ValueError):
        StepDistribution(np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        StepDistribution(np.array([1.0, 2.0]), np.array([0.7, 0.5]))
    s = StepDistribution(np.array([1.0, 2.0]), np.array([0.25, 0.25]))
    assert s.scaled(2.0).total_mass == pytest.approx(1.0)

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from elasticsched.analytic import (CoxianPhases, InfeasibleMoments, Moments3, busy_period_moments,
                                   coxian_moments, fit_coxian)


def test_single_phase_moments():
    np.testing.assert_allclose(coxian_moments(CoxianPhases(((2.0, 0.0),))), (0.5, 0.5, 0.75))


def test_erlang2_moments():
    mu = 3.0
    np.testing.assert_allclose(coxian_moments(CoxianPhases(((mu, 1.0), (mu, 0.0)))),
                               (2 / mu, 6 / mu ** 2, 24 / mu ** 3), rtol=1e-14)


def test_exponential_fit_is_single_phase():
    c = fit_coxian(Moments3(1 / 2.5, 2 / 2.5 ** 2, 6 / 2.5 ** 3))
    assert len(c) == 1 and c.phases[0] == pytest.approx((2.5, 0.0))


def test_erlang2_fit_recovered():
    c = fit_coxian(Moments3(2.0, 6.0, 24.0))
    assert c.phases[0] == pytest.approx((1.0, 1.0)) and c.phases[1][0] == pytest.approx(1.0)


def test_busy_period_fit_closed_form():
    # for mu = 1 the phase means are (1 -+ sqrt(r)) / (1 - r)^2
    r = 0.5
    c = fit_coxian(busy_period_moments(r, 1.0))
    u = (1 - r) ** 2
    assert 1 / c.rates[0] == pytest.approx((1 - np.sqrt(r)) / u)
    assert 1 / c.rates[1] == pytest.approx((1 + np.sqrt(r)) / u)
    assert c.phases[0][1] == pytest.approx(np.sqrt(r) * (1 - np.sqrt(r)) / (1 + np.sqrt(r)))


@pytest.mark.parametrize("ratio", [0.1 * n for n in range(1, 10)])
def test_busy_period_round_trip(ratio):
    m = busy_period_moments(ratio, 1.0)
    np.testing.assert_allclose(coxian_moments(fit_coxian(m)), m, rtol=1e-9)


@given(lam=st.floats(0.0, 0.995), mu=st.floats(0.01, 100.0))
@example(lam=6.313804403291972e-09, mu=1.0)
def test_round_trip_property(lam, mu):
    m = busy_period_moments(lam * mu, mu)
    c = fit_coxian(m)
    assert c.phases[-1][1] == 0.0 and all(r > 0 for r in c.rates)
    np.testing.assert_allclose(coxian_moments(c), m, rtol=1e-9)


@pytest.mark.parametrize("moments,condition", [
    (Moments3(1.0, 0.5, 1.0), "second moment below first moment squared"),
    (Moments3(1.0, 1.2, 1.5), "cv2 below 1/2"),
    (Moments3(1.0, 2.0, 5.0), "cv2 equals 1 but third moment is not exponential"),
    (Moments3(1.0, 1.6, 2.0), "complex rates"),
    (Moments3(1.0, 1.6, 6.0), "nonpositive rate"),
    (Moments3(1.0, 1.8, 2.0), "exit probability out of [0,1]"),
    (Moments3(-1.0, 2.0, 6.0), "nonpositive or non-finite moments"),
])
def test_infeasible_conditions(moments, condition):
    with pytest.raises(InfeasibleMoments) as exc:
        fit_coxian(moments)
    assert exc.value.condition == condition


@pytest.mark.parametrize("phases", [((1.0, 0.5),), ((0.0, 0.0),), ((1.0, 1.5), (1.0, 0.0))])
def test_invalid_phases(phases):
    with pytest.raises(ValueError):
        CoxianPhases(phases)

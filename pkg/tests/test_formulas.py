from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from elasticsched.analytic import (Unstable, busy_period_moments, counterexample_values, erlang_c,
                                   expected_total_response, mm1_mean_response, mmk_mean_response)
from elasticsched.domain import State, SystemParams
from elasticsched.policies import EF, IF
from oracles import busy_periods, erlang_c_direct


@pytest.mark.parametrize("lam,mu,expected", [(1, 2, 1.0), (0, 3, 1 / 3), (0.9, 1, 10.0)])
def test_mm1(lam, mu, expected):
    assert mm1_mean_response(lam, mu) == pytest.approx(expected, rel=1e-14)


def test_mm1_unstable():
    with pytest.raises(Unstable):
        mm1_mean_response(1.0, 1.0)


@pytest.mark.parametrize("lam,mu,k", [(1.8, 1, 2), (3.5, 1, 4), (0.3, 0.5, 3), (14.0, 1.0, 16)])
def test_mmk_against_textbook_sum(lam, mu, k):
    c = erlang_c_direct(k, lam / mu)
    assert erlang_c(k, lam / mu) == pytest.approx(c, rel=1e-12)
    assert mmk_mean_response(lam, mu, k) == pytest.approx(c / (k * mu - lam) + 1 / mu, rel=1e-12)


@given(lam=st.floats(0.0, 0.99), mu=st.floats(0.1, 10))
def test_mmk_reduces_to_mm1(lam, mu):
    assert mmk_mean_response(lam * mu, mu, 1) == pytest.approx(mm1_mean_response(lam * mu, mu), rel=1e-12)


def test_mmk_no_arrivals_and_unstable():
    assert mmk_mean_response(0, 2.0, 5) == 0.5
    with pytest.raises(Unstable):
        mmk_mean_response(4.0, 1.0, 4)


def test_erlang_c_large_k_finite():
    assert 0 < erlang_c(500, 490.0) < 1


def _transform_moments(lam, mu):
    s = sp.symbols("s")
    if lam == 0:
        b = mu / (mu + s)
    else:
        b = ((mu + lam + s) - sp.sqrt((mu + lam + s) ** 2 - 4 * lam * mu)) / (2 * lam)
    return [float((-1) ** n * sp.diff(b, s, n).subs(s, 0)) for n in (1, 2, 3)]


@pytest.mark.parametrize("lam,mu", [(sp.Rational(1, 2), 1), (sp.Rational(9, 10), 1), (0, 2),
                                    (sp.Rational(3, 1), 4), (sp.Rational(1, 10), sp.Rational(1, 3))])
def test_busy_period_moments_match_transform(lam, mu):
    expected = _transform_moments(lam, mu)
    np.testing.assert_allclose(busy_period_moments(float(lam), float(mu)), expected, rtol=1e-12)


def test_busy_period_examples():
    assert busy_period_moments(0.0, 2.0) == pytest.approx((0.5, 0.5, 0.75))
    assert busy_period_moments(0.5, 1.0).m1 == pytest.approx(2.0)
    with pytest.raises(Unstable):
        busy_period_moments(1.0, 1.0)


@pytest.mark.parametrize("ratio", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_busy_period_moments_statistically_consistent(ratio):
    # z-scores of the sample moments; 2e5 periods keep this fast
    x = busy_periods(ratio, 1.0, 200_000, np.random.default_rng(11))
    for n, m in zip((1, 2, 3), busy_period_moments(ratio, 1.0)):
        se = (x ** n).std() / np.sqrt(x.size)
        assert abs((x ** n).mean() - m) < 4.5 * se


def test_counterexample_exact_fractions():
    v = counterexample_values(1.0)
    assert v.T_IF_exact == Fraction(35, 12)
    assert v.T_EF_exact == Fraction(33, 12)
    assert v.per_job == pytest.approx((35 / 36, 11 / 12))


def test_counterexample_terms_by_hand():
    mu_i, mu_e = Fraction(1), Fraction(2)
    t_if = (Fraction(3) / (2 * mu_i) + 2 / (mu_i + mu_e)
            + mu_i / (mu_i + mu_e) / (2 * mu_e) + mu_e / (mu_i + mu_e) / mu_i)
    t_ef = Fraction(3) / (2 * mu_e) + Fraction(2) / (2 * mu_i) + 1 / mu_i
    v = counterexample_values(1.0)
    assert (v.T_IF_exact, v.T_EF_exact) == (t_if, t_ef)


@pytest.mark.parametrize("mu_i", [2.0, 0.5, 4.0])
def test_counterexample_time_scaling(mu_i):
    v = counterexample_values(mu_i)
    assert v.T_IF == pytest.approx(35 / 12 / mu_i, rel=1e-15)
    assert v.T_EF == pytest.approx(33 / 12 / mu_i, rel=1e-15)


def test_expected_total_single_job():
    p = SystemParams(0, 0, 3.0, 1.0, 4)
    assert expected_total_response(IF, p, State(1, 0)) == Fraction(1, 3)
    assert expected_total_response(EF, p, State(0, 1)) == Fraction(1, 4)

"""Closed-form queueing results and exact first-step analysis without arrivals."""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

from ..domain import SystemParams, State
from ..policies import EF, IF, Policy


class Unstable(ValueError):
    pass


def mm1_mean_response(lam: float, mu: float) -> float:
    if lam < 0 or mu <= 0:
        raise ValueError("need lambda >= 0 and mu > 0")
    if lam >= mu:
        raise Unstable(f"M/M/1 unstable: lambda={lam} >= mu={mu}")
    return 1.0 / (mu - lam)


def erlang_c(k: int, offered: float) -> float:
    """Probability of waiting in M/M/k with offered load ``lambda/mu``.

    Uses the Erlang-B recursion, which stays finite for large ``k``.
    """
    if offered <= 0:
        return 0.0
    if offered >= k:
        raise Unstable(f"offered load {offered} >= k={k}")
    b = 1.0
    for n in range(1, k + 1):
        b = offered * b / (n + offered * b)
    return k * b / (k - offered * (1.0 - b))


def mmk_mean_response(lam: float, mu: float, k: int) -> float:
    if lam < 0 or mu <= 0 or k < 1:
        raise ValueError("need lambda >= 0, mu > 0, k >= 1")
    if lam >= k * mu:
        raise Unstable(f"M/M/k unstable: lambda={lam} >= k*mu={k * mu}")
    return erlang_c(k, lam / mu) / (k * mu - lam) + 1.0 / mu


class Moments3(NamedTuple):
    m1: float
    m2: float
    m3: float

    def scv(self) -> float:
        return self.m2 / self.m1 ** 2 - 1.0


def busy_period_moments(lam: float, mu: float) -> Moments3:
    """Raw moments 1-3 of an M/M/1 busy period.

    Obtained by differentiating the fixed point
    ``B(s) = mu / (mu + lam + s - lam B(s))`` at ``s = 0``.
    """
    if lam < 0 or mu <= 0:
        raise ValueError("need lambda >= 0 and mu > 0")
    if lam >= mu:
        raise Unstable(f"busy period infinite: lambda={lam} >= mu={mu}")
    r = lam / mu
    u = 1.0 - r
    return Moments3(1.0 / (mu * u),
                    2.0 / (mu ** 2 * u ** 3),
                    6.0 * (1.0 + r) / (mu ** 3 * u ** 5))


class CounterexampleValues(NamedTuple):
    T_IF: float
    T_EF: float
    T_IF_exact: Fraction
    T_EF_exact: Fraction

    @property
    def per_job(self) -> tuple:
        """Per-job means (three initial jobs)."""
        return self.T_IF / 3.0, self.T_EF / 3.0


def expected_total_response(policy: Policy, params: SystemParams, start: State) -> Fraction:
    """Exact expected sum of response times of the jobs present at ``start``.

    No arrivals occur. From each state the sojourn is exponential with the
    total completion rate, during which every present job accrues response
    time; the recursion runs over the finitely many states below ``start``.
    Rates are converted to ``Fraction`` so the result is exact for the
    binary values of the inputs.
    """
    mu_i = Fraction(params.mu_I)
    mu_e = Fraction(params.mu_E)

    @lru_cache(maxsize=None)
    def total(i: int, j: int) -> Fraction:
        if i + j == 0:
            return Fraction(0)
        a_i, a_e = policy.allocate(State(i, j), params)
        r_i = Fraction(a_i) * mu_i if i > 0 else Fraction(0)
        r_e = Fraction(a_e) * mu_e if j > 0 else Fraction(0)
        rate = r_i + r_e
        if rate == 0:
            raise ValueError(f"policy idles forever in state ({i}, {j})")
        value = Fraction(i + j) / rate
        if r_i:
            value += r_i / rate * total(i - 1, j)
        if r_e:
            value += r_e / rate * total(i, j - 1)
        return value

    return total(start.i, start.j)


def counterexample_values(mu_I: float) -> CounterexampleValues:
    """IF versus EF from two inelastic jobs and one elastic job.

    Fixed setting: k = 2, mu_E = 2 mu_I, no arrivals. Values are expected
    totals over the three jobs; ``per_job`` divides by three.
    """
    params = SystemParams(0.0, 0.0, mu_I, 2.0 * mu_I, 2)
    start = State(2, 1)
    t_if = expected_total_response(IF, params, start)
    t_ef = expected_total_response(EF, params, start)
    return CounterexampleValues(float(t_if), float(t_ef), t_if, t_ef)


def mm1_level_probability(rho: float, level: int) -> float:
    return (1.0 - rho) * rho ** level


def mmk_level_probabilities(lam: float, mu: float, k: int, n_levels: int):
    """Stationary P(N = n) for n < n_levels in M/M/k (log-space, stable)."""
    a = lam / mu
    rho = a / k
    logs = []
    for n in range(n_levels):
        if n <= k:
            logs.append(n * math.log(a) - math.lgamma(n + 1) if a > 0 else (0.0 if n == 0 else -math.inf))
        else:
            logs.append(k * math.log(a) - math.lgamma(k + 1) + (n - k) * math.log(rho))
    # normalizer: sum_{n<k} a^n/n! + a^k/k! / (1 - rho)
    head = [n * math.log(a) - math.lgamma(n + 1) for n in range(k)] if a > 0 else [0.0]
    tail = k * math.log(a) - math.lgamma(k + 1) - math.log1p(-rho) if a > 0 else -math.inf
    top = max(head + [tail])
    z = top + math.log(sum(math.exp(v - top) for v in head + [tail]))
    return [math.exp(v - z) for v in logs]

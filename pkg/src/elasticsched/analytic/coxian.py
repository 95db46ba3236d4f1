"""Three-moment fit by a Coxian distribution with at most two phases."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import numpy as np

from .formulas import Moments3

# relative slack for recognising the exponential case
_EXP_TOL = 1e-9


class InfeasibleMoments(ValueError):
    """Raised when the target moments cannot be matched; ``condition`` names why."""

    def __init__(self, condition: str, moments):
        super().__init__(f"{condition}: {tuple(moments)}")
        self.condition = condition
        self.moments = moments


@dataclass(frozen=True)
class CoxianPhases:
    """Phases visited in order; after phase q the next phase follows with
    probability ``continue_probability`` and absorption happens otherwise."""

    phases: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        phases = tuple((float(r), float(p)) for r, p in self.phases)
        if not phases:
            raise ValueError("a Coxian needs at least one phase")
        for r, p in phases:
            if not r > 0:
                raise ValueError(f"phase rates must be positive, got {r}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"continue probability must lie in [0, 1], got {p}")
        if phases[-1][1] != 0.0:
            raise ValueError("last phase must absorb with probability 1")
        object.__setattr__(self, "phases", phases)

    def __len__(self):
        return len(self.phases)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.phases])

    @property
    def continue_probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.phases])

    def subgenerator(self) -> np.ndarray:
        n = len(self.phases)
        t = np.zeros((n, n))
        for q, (r, p) in enumerate(self.phases):
            t[q, q] = -r
            if q + 1 < n:
                t[q, q + 1] = p * r
        return t

    def exit_rates(self) -> np.ndarray:
        return np.array([(1.0 - p) * r for r, p in self.phases])


def coxian_moments(coxian: CoxianPhases) -> Moments3:
    """Raw moments ``n! alpha (-T)^-n 1`` of the phase-type representation."""
    n = len(coxian)
    alpha = np.zeros(n)
    alpha[0] = 1.0
    inv = np.linalg.inv(-coxian.subgenerator())
    ones = np.ones(n)
    v = ones
    out = []
    for order in (1, 2, 3):
        v = inv @ v
        out.append(math.factorial(order) * float(alpha @ v))
    return Moments3(*out)


def fit_coxian(moments: Moments3) -> CoxianPhases:
    """Match three raw moments exactly.

    Works with reduced moments ``r_n = m_n / n!``. A two-phase Coxian with
    phase means ``a`` (first) and ``b`` (second) and continue probability
    ``p`` has ``r_1 = a + p b`` and the phase means are the roots of
    ``x^2 - s1 x + s2`` with ``s1 = (r3 - r1 r2)/D``,
    ``s2 = (r1 r3 - r2^2)/D`` and ``D = r2 - r1^2``. The faster phase is
    placed first. Exponential moments return a single phase.
    """
    m1, m2, m3 = (float(x) for x in moments)
    if not (m1 > 0 and m3 > 0 and np.isfinite([m1, m2, m3]).all()):
        raise InfeasibleMoments("nonpositive or non-finite moments", moments)
    if m2 < m1 * m1:
        raise InfeasibleMoments("second moment below first moment squared", moments)
    n2 = m2 / (m1 * m1)
    n3 = m3 / (m1 * m2)
    if n2 < 1.5:
        raise InfeasibleMoments("cv2 below 1/2", moments)
    if abs(n2 - 2.0) <= _EXP_TOL:
        if abs(n3 - 3.0) <= _EXP_TOL:
            return CoxianPhases(((1.0 / m1, 0.0),))
        raise InfeasibleMoments("cv2 equals 1 but third moment is not exponential", moments)
    # exact rational arithmetic: r2 - r1^2 cancels badly when cv2 is near 1
    r1, r2, r3 = Fraction(m1), Fraction(m2) / 2, Fraction(m3) / 6
    d = r2 - r1 * r1
    s1 = (r3 - r1 * r2) / d
    s2 = (r1 * r3 - r2 * r2) / d
    disc = s1 * s1 - 4 * s2
    if disc < 0:
        # Erlang-2 sits exactly on the boundary; allow rounding noise
        if disc > Fraction(-1e-12) * s1 * s1:
            disc = Fraction(0)
        else:
            raise InfeasibleMoments("complex rates", moments)
    if not (s1 > 0 and s2 > 0):
        raise InfeasibleMoments("nonpositive rate", moments)
    root = math.sqrt(disc)
    b = (float(s1) + root) / 2.0
    a = float(s2) / b
    p = float((r1 - Fraction(a)) / Fraction(b))
    if -1e-12 < p < 0:
        p = 0.0
    elif 1 < p < 1 + 1e-12:
        p = 1.0
    if not 0.0 <= p <= 1.0:
        raise InfeasibleMoments("exit probability out of [0,1]", moments)
    return CoxianPhases(((1.0 / a, p), (1.0 / b, 0.0)))

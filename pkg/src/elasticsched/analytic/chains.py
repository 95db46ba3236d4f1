"""One-dimensional chains for IF and EF with busy periods replaced by Coxians.

Under EF the elastic class is an M/M/1 queue with rate ``k mu_E`` that
blocks the inelastic class whenever it is nonempty; the EF chain tracks the
inelastic count as its level. Under IF the inelastic class is M/M/k and
elastic service stops while at least ``k`` inelastic jobs are present; the
IF chain tracks the elastic count. In both cases the stretch during which
the other class holds every server is an M/M/1 busy period, approximated
by a Coxian matching its first three moments.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..domain import SystemParams
from .coxian import CoxianPhases, fit_coxian
from .formulas import Unstable, busy_period_moments, mm1_mean_response, mmk_mean_response
from .qbd import QbdBlocks, solve_qbd


class ResponseTimes(NamedTuple):
    T: float
    T_I: float
    T_E: float


def _coxian_block(cox: CoxianPhases, offset: int, m: int, back: int) -> np.ndarray:
    """Within-level rates of the Coxian phases; absorption goes to phase ``back``."""
    q = np.zeros((m, m))
    for idx, (rate, cont) in enumerate(cox.phases):
        s = offset + idx
        if idx + 1 < len(cox):
            q[s, s + 1] += cont * rate
        q[s, back] += (1.0 - cont) * rate
    return q


def _with_diagonal(local: np.ndarray, *others: np.ndarray) -> np.ndarray:
    out = local - np.diag(np.diag(local))
    total = out.sum(axis=1) + sum(o.sum(axis=1) for o in others)
    return out - np.diag(total)


def _check_ratio(lam, mu, what):
    if lam >= mu:
        raise Unstable(f"{what}: lambda={lam} >= rate={mu}")


def build_ef_chain(params: SystemParams) -> QbdBlocks:
    params.require_stable()
    k = params.k
    lam_i, lam_e, mu_i, mu_e = params.lambda_I, params.lambda_E, params.mu_I, params.mu_E
    _check_ratio(lam_e, k * mu_e, "elastic class under EF")
    cox = fit_coxian(busy_period_moments(lam_e, k * mu_e))
    m = 1 + len(cox)
    base = _coxian_block(cox, 1, m, 0)
    base[0, 1] += lam_e
    up = lam_i * np.eye(m)

    def down(level):
        d = np.zeros((m, m))
        d[0, 0] = min(level, k) * mu_i
        return d

    local = []
    ups = []
    downs = []
    for lvl in range(k):
        dn = down(lvl)
        local.append(_with_diagonal(base, up, dn))
        ups.append(up)
        downs.append(dn if lvl > 0 else None)
    a2 = down(k)
    a1 = _with_diagonal(base, up, a2)
    labels = ["serving"] + [f"busy{q + 1}" for q in range(len(cox))]
    return QbdBlocks(local, ups, downs, up, a1, a2, labels)


def build_if_chain(params: SystemParams) -> QbdBlocks:
    params.require_stable()
    k = params.k
    lam_i, lam_e, mu_i, mu_e = params.lambda_I, params.lambda_E, params.mu_I, params.mu_E
    _check_ratio(lam_i, k * mu_i, "inelastic class under IF")
    cox = fit_coxian(busy_period_moments(lam_i, k * mu_i))
    m = k + len(cox)
    base = _coxian_block(cox, k, m, k - 1)
    for i in range(k):
        base[i, i + 1] += lam_i  # i = k-1 enters the first busy-period phase
        if i > 0:
            base[i, i - 1] += i * mu_i
    up = lam_e * np.eye(m)
    a2 = np.zeros((m, m))
    for i in range(k):
        a2[i, i] = (k - i) * mu_e
    level0 = _with_diagonal(base, up)
    a1 = _with_diagonal(base, up, a2)
    labels = [f"i={i}" for i in range(k)] + [f"busy{q + 1}" for q in range(len(cox))]
    return QbdBlocks([level0], [up], [None], up, a1, a2, labels)


def _combine(params, t_i, t_e) -> ResponseTimes:
    lam_i, lam_e = params.lambda_I, params.lambda_E
    lam = lam_i + lam_e
    if lam == 0:
        return ResponseTimes(math.nan, t_i, t_e)
    if lam_i == 0:
        return ResponseTimes(t_e, math.nan, t_e)
    if lam_e == 0:
        return ResponseTimes(t_i, t_i, math.nan)
    return ResponseTimes((lam_i * t_i + lam_e * t_e) / lam, t_i, t_e)


def mean_response_ef(params: SystemParams, **solver) -> ResponseTimes:
    t_e = mm1_mean_response(params.lambda_E, params.k * params.mu_E)
    if params.lambda_I == 0:
        return _combine(params, math.nan, t_e)
    dist = solve_qbd(build_ef_chain(params), **solver)
    return _combine(params, dist.mean_level() / params.lambda_I, t_e)


def mean_response_if(params: SystemParams, **solver) -> ResponseTimes:
    t_i = mmk_mean_response(params.lambda_I, params.mu_I, params.k)
    if params.lambda_E == 0:
        return _combine(params, t_i, math.nan)
    dist = solve_qbd(build_if_chain(params), **solver)
    return _combine(params, t_i, dist.mean_level() / params.lambda_E)

"""Monte-Carlo estimate of the total response time of an initial batch of jobs."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..domain import InvalidParams, State, SystemParams
from ..policies import Policy
from . import _engine
from .steady import halfwidth, stream_seed


class TransientEstimate(NamedTuple):
    mean: float
    ci_halfwidth: float
    replications: int
    n_jobs: int

    @property
    def per_job_mean(self) -> float:
        return self.mean / self.n_jobs


def transient_estimate(policy: Policy, initial_state: State, params: SystemParams,
                       replications: int = 1_000_000, seed: int = 0) -> TransientEstimate:
    if params.lambda_I != 0 or params.lambda_E != 0:
        raise InvalidParams("transient runs require zero arrival rates")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    i, j = initial_state
    if i + j == 0:
        return TransientEstimate(0.0, 0.0, replications, 0)
    tab_i, tab_e, tab_def, rule = policy.arrays(params)
    totals = _engine.transient_totals(int(i), int(j), params.mu_I, params.mu_E, params.k,
                                      tab_i, tab_e, tab_def, rule, int(replications),
                                      stream_seed(seed, 0))
    if not np.isfinite(totals).all():
        raise ValueError(f"policy {policy.name} leaves jobs unserved forever")
    hw = halfwidth(totals) if replications > 1 else math.inf
    return TransientEstimate(float(totals.mean()), hw, replications, i + j)


def transient_mean_total_response(policy: Policy, initial_state: State, params: SystemParams,
                                  replications: int = 1_000_000, seed: int = 0) -> float:
    """Expected sum of response times of the jobs in ``initial_state``.

    Sizes are drawn afresh in every replication; no jobs arrive.
    """
    return transient_estimate(policy, initial_state, params, replications, seed).mean

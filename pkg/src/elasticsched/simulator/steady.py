"""Steady-state simulation of the two-class system under a stationary policy."""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats

from ..domain import InvalidParams, SystemParams
from ..policies import Policy
from . import _engine

GENERATOR_ID = "numba-mt19937"

METRICS = ("mean_N", "mean_N_I", "mean_N_E", "mean_T", "mean_T_I", "mean_T_E",
           "mean_W", "mean_W_I", "mean_W_E")


class UnstableRun(RuntimeError):
    pass


def stream_seed(seed: int, replication: int) -> int:
    """32-bit kernel seed for replication ``r``: hash of ``seed XOR r``.

    The kernel generator is a 32-bit-seeded Mersenne Twister, so the 64-bit
    value ``seed ^ r`` is condensed through ``numpy.random.SeedSequence``.
    """
    return int(np.random.SeedSequence(int(seed) ^ int(replication)).generate_state(1)[0])


@dataclass(frozen=True)
class SimConfig:
    """``horizon`` counts events (arrivals plus completions) per replication.

    When ``target_rel_halfwidth`` is set, replications are added beyond
    ``replications`` until the relative 95% half-width of ``mean_T`` drops
    below it or ``max_replications`` is reached.
    """

    horizon: int = 1_000_000
    warmup_fraction: float = 0.2
    seed: int = 0
    replications: int = 20
    guard: int = 10_000_000
    target_rel_halfwidth: Optional[float] = None
    max_replications: int = 200

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimStats:
    mean_N: float
    mean_N_I: float
    mean_N_E: float
    mean_T: float
    mean_T_I: float
    mean_T_E: float
    mean_W: float
    mean_W_I: float
    mean_W_E: float
    ci_halfwidth: Dict[str, float]
    replications: int
    per_replication: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    # response times averaged over completed jobs, kept as a Little's-law check
    tagged_T_I: float = math.nan
    tagged_T_E: float = math.nan
    metadata: Dict[str, str] = field(default_factory=dict)

    def ci(self, metric: str) -> float:
        return self.ci_halfwidth[metric]


def halfwidth(samples: np.ndarray, level: float = 0.95) -> float:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2 or not np.isfinite(samples).all():
        return math.nan if n >= 2 else math.inf
    return float(stats.t.ppf(0.5 + level / 2, n - 1) * samples.std(ddof=1) / math.sqrt(n))


def control_variate_mean(y, x, x_mean: float, level: float = 0.95) -> Tuple[float, float]:
    """Regression-adjusted mean of per-replication ``y`` using a control ``x``
    whose true mean ``x_mean`` is known. Returns (estimate, CI half-width)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.size
    if n < 3:
        raise ValueError("control variates need at least 3 replications")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    beta = float(dx @ (y - y.mean())) / sxx if sxx > 0 else 0.0
    estimate = float(y.mean() - beta * (x.mean() - x_mean))
    resid = y - y.mean() - beta * dx
    s2 = float(resid @ resid) / (n - 2)
    var = s2 * (1.0 / n + (x.mean() - x_mean) ** 2 / sxx) if sxx > 0 else s2 / n
    return estimate, float(stats.t.ppf(0.5 + level / 2, n - 2) * math.sqrt(var))


def _run_one(policy, params, config, r, tables):
    tab_i, tab_e, tab_def, rule = tables
    n_events = int(config.horizon)
    warm = int(config.warmup_fraction * n_events)
    out = _engine.steady_state(params.lambda_I, params.lambda_E, params.mu_I, params.mu_E,
                               params.k, tab_i, tab_e, tab_def, rule,
                               n_events + warm, warm, stream_seed(config.seed, r), config.guard)
    if out[9]:
        raise UnstableRun(f"job count exceeded guard {config.guard} in replication {r} "
                          f"under policy {policy.name}")
    return out


def _summarize(raw, params, policy, config) -> SimStats:
    raw = np.asarray(raw)
    span = raw[:, 0]
    lam = params.lambda_I + params.lambda_E
    per = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        per["mean_N_I"] = raw[:, 1] / span
        per["mean_N_E"] = raw[:, 2] / span
        per["mean_W_I"] = raw[:, 3] / span
        per["mean_W_E"] = raw[:, 4] / span
    per["mean_N"] = per["mean_N_I"] + per["mean_N_E"]
    per["mean_W"] = per["mean_W_I"] + per["mean_W_E"]
    nan = np.full(len(raw), math.nan)
    per["mean_T"] = per["mean_N"] / lam if lam > 0 else nan
    per["mean_T_I"] = per["mean_N_I"] / params.lambda_I if params.lambda_I > 0 else nan
    per["mean_T_E"] = per["mean_N_E"] / params.lambda_E if params.lambda_E > 0 else nan
    means = {m: float(np.mean(per[m])) for m in METRICS}
    ci = {m: halfwidth(per[m]) for m in METRICS}
    with np.errstate(invalid="ignore", divide="ignore"):
        tagged_i = float(raw[:, 5].sum() / raw[:, 6].sum()) if raw[:, 6].sum() else math.nan
        tagged_e = float(raw[:, 7].sum() / raw[:, 8].sum()) if raw[:, 8].sum() else math.nan
    meta = {"seed": str(config.seed), "generator": GENERATOR_ID,
            "stream_rule": "SeedSequence(seed ^ r)", "policy": policy.name,
            "lambda_I": repr(params.lambda_I), "lambda_E": repr(params.lambda_E),
            "mu_I": repr(params.mu_I), "mu_E": repr(params.mu_E), "k": str(params.k),
            "events": str(config.horizon), "warmup_fraction": repr(config.warmup_fraction)}
    return SimStats(**means, ci_halfwidth=ci, replications=len(raw), per_replication=per,
                    tagged_T_I=tagged_i, tagged_T_E=tagged_e, metadata=meta)


def simulate_ctmc(policy: Policy, params: SystemParams, config: SimConfig = SimConfig()) -> SimStats:
    """Time-average counts and work after warmup; response times by Little's law.

    The system is simulated job by job (each job has an actual remaining
    size) so that remaining work can be measured. With exponential sizes
    the count process has the same law as the two-dimensional chain.
    """
    params.require_stable()
    lam = params.lambda_I + params.lambda_E
    if lam == 0:
        zero = {m: 0.0 for m in METRICS}
        return SimStats(**zero, ci_halfwidth={m: 0.0 for m in METRICS},
                        replications=config.replications,
                        metadata={"seed": str(config.seed), "generator": GENERATOR_ID})
    tables = policy.arrays(params)
    raw = [_run_one(policy, params, config, r, tables) for r in range(config.replications)]
    target = config.target_rel_halfwidth
    if target is not None:
        r = config.replications
        while r < config.max_replications:
            s = _summarize(raw, params, policy, config)
            if s.ci_halfwidth["mean_T"] <= target * s.mean_T:
                return s
            raw.append(_run_one(policy, params, config, r, tables))
            r += 1
    return _summarize(raw, params, policy, config)


def stats_csv(stats: SimStats) -> str:
    buf = io.StringIO()
    for key in sorted(stats.metadata):
        buf.write(f"# {key}={stats.metadata[key]}\n")
    cols = list(METRICS) + [f"ci_{m}" for m in METRICS] + ["replications"]
    buf.write(",".join(cols) + "\n")
    vals = [getattr(stats, m) for m in METRICS] + [stats.ci_halfwidth[m] for m in METRICS]
    buf.write(",".join(repr(float(v)) for v in vals) + f",{stats.replications}\n")
    return buf.getvalue()

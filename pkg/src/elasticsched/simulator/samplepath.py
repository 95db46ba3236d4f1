"""Deterministic fluid simulation on a fixed arrival sequence and the work
ordering check between two coupled runs."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..domain import ArrivalSequence, InvalidParams, SystemParams
from ..policies import Policy
from . import _engine


class PolicyNotInP(ValueError):
    pass


def generate_arrivals(params: SystemParams, horizon: float, seed: int) -> ArrivalSequence:
    """Two independent Poisson streams on ``[0, horizon)`` merged by time.

    Uses ``numpy.random.default_rng(seed)``; the inelastic stream is drawn
    first, then the elastic stream, then sizes in arrival order per class.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)

    def stream(rate):
        if rate == 0:
            return np.empty(0)
        # draw in chunks until the horizon is passed
        out = []
        t = 0.0
        chunk = max(16, int(rate * horizon * 1.1) + 16)
        while True:
            gaps = rng.exponential(1.0 / rate, chunk)
            times = t + np.cumsum(gaps)
            out.append(times)
            t = times[-1]
            if t >= horizon:
                break
        times = np.concatenate(out)
        return times[times < horizon]

    t_i = stream(params.lambda_I)
    t_e = stream(params.lambda_E)
    s_i = rng.exponential(1.0 / params.mu_I, t_i.size)
    s_e = rng.exponential(1.0 / params.mu_E, t_e.size)
    times = np.concatenate([t_i, t_e])
    elastic = np.concatenate([np.zeros(t_i.size, bool), np.ones(t_e.size, bool)])
    sizes = np.concatenate([s_i, s_e])
    order = np.argsort(times, kind="stable")
    return ArrivalSequence(times[order], elastic[order], sizes[order], float(horizon))


@dataclass(frozen=True)
class WorkTrajectory:
    """Remaining work at every event; consecutive rows with equal time mark a jump.

    ``completion_times[n]`` is the completion time of arrival ``n``
    (``inf`` if it was still present at the horizon).
    """

    times: np.ndarray
    W_I: np.ndarray
    W_E: np.ndarray
    N_I: Optional[np.ndarray] = None
    N_E: Optional[np.ndarray] = None
    completion_times: Optional[np.ndarray] = None
    policy: str = ""

    @property
    def W(self) -> np.ndarray:
        return self.W_I + self.W_E

    @property
    def checkpoints(self) -> list:
        return [(float(t), float(a + b), float(a), float(b))
                for t, a, b in zip(self.times, self.W_I, self.W_E)]

    def values(self, quantity: str) -> np.ndarray:
        return {"W": self.W, "W_I": self.W_I, "W_E": self.W_E}[quantity]

    def evaluate(self, quantity: str, query, side: str = "right") -> np.ndarray:
        """Piecewise-linear value at ``query``; ``side`` picks the limit at jumps."""
        t = self.times
        v = self.values(quantity)
        q = np.atleast_1d(np.asarray(query, dtype=float))
        if side == "right":
            idx = np.searchsorted(t, q, side="right") - 1
        else:
            idx = np.searchsorted(t, q, side="left")
        idx = np.clip(idx, 0, t.size - 1)
        out = v[idx].astype(float)
        exact = t[idx] == q
        # interpolate where the query falls strictly between checkpoints
        if side == "right":
            lo, hi = idx, np.minimum(idx + 1, t.size - 1)
        else:
            lo, hi = np.maximum(idx - 1, 0), idx
        between = ~exact & (t[lo] < q) & (q < t[hi])
        if between.any():
            lo_b, hi_b = lo[between], hi[between]
            frac = (q[between] - t[lo_b]) / (t[hi_b] - t[lo_b])
            out[between] = v[lo_b] + frac * (v[hi_b] - v[lo_b])
        return out

    def to_csv(self, metadata: Optional[dict] = None) -> str:
        buf = io.StringIO()
        for key in sorted(metadata or {}):
            buf.write(f"# {key}={metadata[key]}\n")
        buf.write("time,W,W_I,W_E\n")
        for t, w, wi, we in self.checkpoints:
            buf.write(f"{t!r},{w!r},{wi!r},{we!r}\n")
        return buf.getvalue()


def simulate_sample_path(policy: Policy, arrivals: ArrivalSequence, params: SystemParams,
                         max_events: int = 100_000_000) -> WorkTrajectory:
    """Fluid run: remaining sizes fall at the allocated rate between events.

    Runs until ``arrivals.horizon`` or, for an infinite horizon, until the
    system empties after the last arrival.
    """
    if not policy.fcfs_inelastic:
        raise PolicyNotInP(f"policy {policy.name} does not declare FCFS inelastic service")
    tab_i, tab_e, tab_def, rule = policy.arrays(params)
    cps, completions, n_ev = _engine.sample_path(
        np.ascontiguousarray(arrivals.times), np.ascontiguousarray(arrivals.is_elastic),
        np.ascontiguousarray(arrivals.sizes), float(arrivals.horizon), params.k,
        tab_i, tab_e, tab_def, rule, int(max_events))
    if n_ev >= max_events:
        raise RuntimeError(f"sample path exceeded {max_events} events")
    w_i = np.maximum(cps[:, 1], 0.0)
    w_e = np.maximum(cps[:, 2], 0.0)
    return WorkTrajectory(cps[:, 0].copy(), w_i, w_e, cps[:, 3].astype(np.int64),
                          cps[:, 4].astype(np.int64), completions, policy.name)


class DominanceViolation(NamedTuple):
    time: float
    quantity: str
    reference: float
    other: float


def check_dominance(traj_if: WorkTrajectory, traj_pi: WorkTrajectory,
                    tol: float = 1e-9) -> Optional[DominanceViolation]:
    """``None`` when total and inelastic work of the first trajectory never
    exceed those of the second by more than ``tol``; otherwise the earliest
    violation. Both one-sided limits are compared at every checkpoint time
    of either trajectory."""
    grid = np.union1d(traj_if.times, traj_pi.times)
    worst = None
    for quantity in ("W", "W_I"):
        for side in ("left", "right"):
            a = traj_if.evaluate(quantity, grid, side)
            b = traj_pi.evaluate(quantity, grid, side)
            bad = np.flatnonzero(a > b + tol)
            if bad.size:
                n = bad[0]
                cand = DominanceViolation(float(grid[n]), quantity, float(a[n]), float(b[n]))
                if worst is None or cand.time < worst.time:
                    worst = cand
    return worst

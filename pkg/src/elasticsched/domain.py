"""Core model types: system parameters, chain states, allocations, arrivals.

All comparisons against allocation bounds use an absolute tolerance of
``ATOL`` because allocations are real valued (servers may be time shared).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

ATOL = 1e-12

INELASTIC = "inelastic"
ELASTIC = "elastic"
JOB_CLASSES = (INELASTIC, ELASTIC)


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Arrival rates, exponential size rates and server count.

    Arrival rates may be zero (an empty stream); service rates must be
    strictly positive.
    """

    lambda_I: float
    lambda_E: float
    mu_I: float
    mu_E: float
    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise InvalidParams(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        for name in ("lambda_I", "lambda_E"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidParams(f"{name} must be finite and >= 0, got {v!r}")
        for name in ("mu_I", "mu_E"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidParams(f"{name} must be finite and > 0, got {v!r}")

    @property
    def rho(self) -> float:
        return load(self)

    @property
    def total_arrival_rate(self) -> float:
        return self.lambda_I + self.lambda_E

    def require_stable(self) -> None:
        if load(self) >= 1.0:
            raise InvalidParams(f"load {load(self):.6g} >= 1; steady state does not exist")

    def replace(self, **changes) -> "SystemParams":
        values = dict(lambda_I=self.lambda_I, lambda_E=self.lambda_E,
                      mu_I=self.mu_I, mu_E=self.mu_E, k=self.k)
        values.update(changes)
        return SystemParams(**values)

    @classmethod
    def at_load(cls, rho: float, mu_I: float, mu_E: float, k: int) -> "SystemParams":
        """Equal arrival rates solved so that the load equals ``rho``."""
        lam = rho * k / (1.0 / mu_I + 1.0 / mu_E)
        return cls(lam, lam, mu_I, mu_E, k)


def load(params: SystemParams) -> float:
    """System load: lambda_I/(k mu_I) + lambda_E/(k mu_E)."""
    return (params.lambda_I / (params.k * params.mu_I)
            + params.lambda_E / (params.k * params.mu_E))


class State(NamedTuple):
    i: int  # inelastic jobs present
    j: int  # elastic jobs present

    @property
    def n(self) -> int:
        return self.i + self.j


def make_state(i: int, j: int) -> State:
    if i < 0 or j < 0 or int(i) != i or int(j) != j:
        raise ValueError(f"state counts must be nonnegative integers, got ({i}, {j})")
    return State(int(i), int(j))


class Allocation(NamedTuple):
    servers_inelastic: float
    servers_elastic: float

    @property
    def total(self) -> float:
        return self.servers_inelastic + self.servers_elastic


@dataclass(frozen=True)
class Violation:
    """A failed allocation constraint."""

    constraint: str
    detail: str


def validate_allocation(state: State, alloc: Allocation,
                        params: SystemParams) -> Optional[Violation]:
    """Return ``None`` when ``alloc`` is feasible in ``state``, else the first violation."""
    i, j = state
    a_i, a_e = alloc
    k = params.k
    if a_i < -ATOL or a_e < -ATOL:
        return Violation("nonnegative", f"negative allocation {alloc}")
    if a_i > min(i, k) + ATOL:
        return Violation("inelastic_cap", f"pi_I={a_i} exceeds min(i, k)={min(i, k)}")
    if j == 0 and a_e > ATOL:
        return Violation("elastic_indicator", f"pi_E={a_e} > 0 with no elastic jobs")
    if a_e > k + ATOL:
        return Violation("elastic_cap", f"pi_E={a_e} exceeds k={k}")
    if a_i + a_e > k + ATOL:
        return Violation("total_cap", f"pi_I + pi_E = {a_i + a_e} exceeds k={k}")
    return None


class Arrival(NamedTuple):
    time: float
    job_class: str
    size: float


@dataclass(frozen=True)
class ArrivalSequence:
    """A fixed sample path of arrivals, stored with absolute times.

    Internally kept as three parallel numpy arrays so simulators can consume
    it without conversion; ``events`` gives the tuple view.
    """

    times: np.ndarray
    is_elastic: np.ndarray
    sizes: np.ndarray
    horizon: float = field(default=float("inf"))

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        is_elastic = np.array(self.is_elastic, dtype=np.bool_)
        sizes = np.array(self.sizes, dtype=np.float64)
        if not (times.shape == is_elastic.shape == sizes.shape) or times.ndim != 1:
            raise ValueError("times, is_elastic and sizes must be 1-d and equally long")
        if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
            raise ValueError("arrival times must be nonnegative and nondecreasing")
        if np.any(~(sizes > 0)):
            raise ValueError("job sizes must be strictly positive")
        for arr in (times, is_elastic, sizes):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "is_elastic", is_elastic)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_events(cls, events: Sequence[tuple], horizon: float = float("inf")):
        times = [float(e[0]) for e in events]
        elastic = []
        for e in events:
            if e[1] not in JOB_CLASSES:
                raise ValueError(f"unknown job class {e[1]!r}")
            elastic.append(e[1] == ELASTIC)
        sizes = [float(e[2]) for e in events]
        return cls(np.array(times), np.array(elastic, dtype=bool), np.array(sizes), horizon)

    @property
    def events(self) -> list:
        return list(self)

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self) -> Iterator[Arrival]:
        for t, e, s in zip(self.times, self.is_elastic, self.sizes):
            yield Arrival(float(t), ELASTIC if e else INELASTIC, float(s))

    def count(self, job_class: str) -> int:
        mask = self.is_elastic if job_class == ELASTIC else ~self.is_elastic
        return int(mask.sum())

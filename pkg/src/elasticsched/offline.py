"""Offline batch scheduling of jobs with parallelism caps.

All jobs are present at time 0. Job ``j`` has size ``x_j`` and may run on at
most ``k_j`` of the ``k`` processors; on ``y`` processors running at speed
``s`` its remaining size falls at rate ``y s``. The size-ordered greedy
schedule (SRPT-k) is certified against a dual solution of the
time-indexed relaxation.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

REL_TOL = 1e-9


class TooLarge(ValueError):
    pass


class InstanceFileError(ValueError):
    pass


@dataclass(frozen=True)
class OfflineInstance:
    sizes: Tuple[float, ...]
    caps: Tuple[int, ...]
    k: int

    def __post_init__(self):
        sizes = tuple(self.sizes)
        caps = tuple(int(c) for c in self.caps)
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if len(sizes) != len(caps):
            raise ValueError("sizes and caps must have equal length")
        if any(not x > 0 for x in sizes):
            raise ValueError("job sizes must be positive")
        if any(c < 1 or c > self.k for c in caps):
            raise ValueError(f"caps must lie in [1, {self.k}]")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "k", int(self.k))

    @property
    def jobs(self) -> List[Tuple[float, int]]:
        return list(zip(self.sizes, self.caps))

    def __len__(self):
        return len(self.sizes)

    def size_order(self) -> List[int]:
        """Job indices by nondecreasing size, ties by index."""
        return sorted(range(len(self.sizes)), key=lambda n: (self.sizes[n], n))


class Segment(NamedTuple):
    start: float
    end: float
    assignment: tuple  # processors per job (indexed like the instance)


@dataclass(frozen=True)
class Schedule:
    segments: Tuple[Segment, ...]
    completion_times: Tuple[float, ...]
    speed: float = 1.0


def priority_schedule(instance: OfflineInstance, order: Sequence[int], speed=1) -> Schedule:
    """Greedy schedule: jobs in ``order`` each take ``min(k_j, free)`` processors.

    Arithmetic follows the input types, so ``Fraction`` sizes and speed give
    an exact schedule.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    n = len(instance)
    remaining = list(instance.sizes)
    done = [False] * n
    completion = [None] * n
    segments = []
    t = 0 * speed
    while not all(done):
        free = instance.k
        assign = [0] * n
        for j in order:
            if done[j] or free == 0:
                continue
            y = min(instance.caps[j], free)
            assign[j] = y
            free -= y
        dt = min(remaining[j] / (assign[j] * speed) for j in range(n) if assign[j])
        end = t + dt
        segments.append(Segment(t, end, tuple(assign)))
        for j in range(n):
            if not assign[j]:
                continue
            left = remaining[j] - assign[j] * speed * dt
            # the job defining dt finishes exactly; others within rounding
            if remaining[j] / (assign[j] * speed) == dt or left <= REL_TOL * instance.sizes[j]:
                remaining[j] = 0
                done[j] = True
                completion[j] = end
            else:
                remaining[j] = left
        t = end
    return Schedule(tuple(segments), tuple(completion), speed)


def srpt_k_schedule(instance: OfflineInstance, speed: float = 1.0) -> Schedule:
    if speed < 1:
        raise ValueError("speed must be >= 1")
    return priority_schedule(instance, instance.size_order(), speed)


def total_response_time(schedule: Schedule) -> float:
    return sum(schedule.completion_times)


@dataclass(frozen=True)
class DualCertificate:
    """``beta`` is right-continuous: value ``beta_values[m]`` on
    ``[beta_times[m], beta_times[m+1])`` and zero from ``beta_times[-1]`` on."""

    alpha: Tuple[float, ...]
    U: Tuple[float, ...]
    beta_times: Tuple[float, ...]
    beta_values: Tuple[float, ...]
    s: float
    C: float
    completion_times: Tuple[float, ...]

    def beta_integral(self) -> float:
        edges = self.beta_times
        parts = [v * (edges[m + 1] - edges[m]) for m, v in enumerate(self.beta_values)]
        return sum(parts) if isinstance(self.C, Fraction) else math.fsum(parts)

    def beta_at(self, t: float) -> float:
        for m in range(len(self.beta_values)):
            if self.beta_times[m] <= t < self.beta_times[m + 1]:
                return self.beta_values[m]
        return 0.0


def dual_variables(instance: OfflineInstance, speed: float) -> DualCertificate:
    """Arithmetic follows the input types: ``Fraction`` sizes and speed give
    an exact certificate."""
    n = len(instance)
    k = instance.k
    order = instance.size_order()
    zero = instance.sizes[0] * 0 if n else 0.0
    U = [zero] * n
    ahead = zero
    for j in order:
        U[j] = ahead
        ahead += instance.sizes[j]
    alpha = tuple(U[j] / (k * speed) + instance.sizes[j] / (speed * instance.caps[j])
                  for j in range(n))
    sched = srpt_k_schedule(instance, speed)
    comp = sched.completion_times
    # |Q(t)| drops at each distinct completion time
    times = sorted(set(comp))
    edges = [zero] + times
    values = [sum(1 for c in comp if c > edges[m]) / speed for m in range(len(times))]
    return DualCertificate(alpha, tuple(U), tuple(edges), tuple(values), speed,
                           total_response_time(sched), comp)


class DualViolation(NamedTuple):
    job: int
    time: float
    lhs: float
    rhs: float


def dual_slack(cert: DualCertificate, instance: OfflineInstance):
    """Minimum of ``rhs - lhs`` over all jobs and breakpoints, with its location."""
    k = instance.k
    best = (math.inf, -1, 0.0)
    points = list(zip(cert.beta_times, list(cert.beta_values) + [0.0]))
    for j, (x, c) in enumerate(instance.jobs):
        base = cert.alpha[j] / x
        for t, b in points:
            slack = t / x + 1.0 / (2 * c) - (base - b / k)
            if slack < best[0]:
                best = (slack, j, t)
    return best


def verify_dual_feasibility(cert: DualCertificate, instance: OfflineInstance,
                            tol: float = 1e-9) -> Optional[DualViolation]:
    """``None`` if ``alpha_j/x_j - beta(t)/k <= t/x_j + 1/(2 k_j)`` everywhere.

    The left side only changes where beta drops and the right side grows
    with ``t``, so checking at ``t = 0`` and each drop of beta suffices.
    """
    k = instance.k
    points = list(zip(cert.beta_times, list(cert.beta_values) + [0.0]))
    for j, (x, c) in enumerate(instance.jobs):
        for t, b in points:
            lhs = cert.alpha[j] / x - b / k
            rhs = t / x + 1.0 / (2 * c)
            if lhs > rhs + tol * max(1.0, abs(rhs)):
                return DualViolation(j, t, lhs, rhs)
    return None


def certificate_gap(cert: DualCertificate) -> float:
    """``sum(alpha) - integral(beta) - (1 - 1/s) C``; exact for a ``Fraction`` certificate."""
    total = sum(cert.alpha) if isinstance(cert.C, Fraction) else math.fsum(cert.alpha)
    return total - cert.beta_integral() - (1 - 1 / cert.s) * cert.C


def brute_force_opt(instance: OfflineInstance, max_jobs: int = 4) -> float:
    """Best total response time over all priority-order greedy schedules.

    Evaluated exactly with rational arithmetic. Equals the optimum whenever
    some priority order is optimal and otherwise bounds it from above.
    """
    if len(instance) > max_jobs:
        raise TooLarge(f"{len(instance)} jobs exceeds the limit of {max_jobs}")
    exact = OfflineInstance(tuple(Fraction(x) for x in instance.sizes), instance.caps, instance.k)
    best = None
    for order in itertools.permutations(range(len(instance))):
        total = sum(priority_schedule(exact, order, Fraction(1)).completion_times)
        if best is None or total < best:
            best = total
    return float(best) if best is not None else 0.0


def random_instance(rng: np.random.Generator, max_jobs: int = 50, max_k: int = 8) -> OfflineInstance:
    k = int(rng.integers(1, max_k + 1))
    n = int(rng.integers(1, max_jobs + 1))
    sizes = tuple(float(x) for x in np.exp(rng.uniform(math.log(0.01), math.log(100.0), n)))
    caps = tuple(int(c) for c in rng.integers(1, k + 1, n))
    return OfflineInstance(sizes, caps, k)


def enumerate_small_instances(sizes=(1, 2, 3, 5, 8), ks=(1, 2, 4), max_jobs: int = 4):
    """Every multiset of up to ``max_jobs`` (size, cap) jobs with caps in {1, 2, k}."""
    for k in ks:
        caps = sorted({c for c in (1, 2, k) if c <= k})
        kinds = [(x, c) for x in sizes for c in caps]
        for n in range(1, max_jobs + 1):
            for combo in itertools.combinations_with_replacement(kinds, n):
                yield OfflineInstance(tuple(x for x, _ in combo), tuple(c for _, c in combo), k)


def parse_instance(text: str) -> OfflineInstance:
    k = None
    sizes, caps = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if k is None:
            key, sep, val = line.partition("=")
            if not sep or key.strip() != "k":
                raise InstanceFileError(f"line {lineno}: expected header 'k=<int>'")
            try:
                k = int(val)
            except ValueError:
                raise InstanceFileError(f"line {lineno}: bad server count {val.strip()!r}") from None
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InstanceFileError(f"line {lineno}: expected 'size cap'")
        try:
            sizes.append(float(parts[0]))
            caps.append(int(parts[1]))
        except ValueError:
            raise InstanceFileError(f"line {lineno}: cannot parse {line!r}") from None
    if k is None:
        raise InstanceFileError("missing header 'k=<int>'")
    try:
        return OfflineInstance(tuple(sizes), tuple(caps), k)
    except ValueError as exc:
        raise InstanceFileError(str(exc)) from None


def load_instance(path) -> OfflineInstance:
    with open(path) as fh:
        return parse_instance(fh.read())


def format_instance(instance: OfflineInstance) -> str:
    lines = [f"k={instance.k}"] + [f"{x!r} {c}" for x, c in instance.jobs]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CertificateReport:
    instance: OfflineInstance
    certificate: DualCertificate
    violation: Optional[DualViolation]
    gap: float
    srpt_total: float
    opt_total: Optional[float]

    @property
    def ratio(self) -> Optional[float]:
        return None if self.opt_total is None else self.srpt_total / self.opt_total

    @property
    def ok(self) -> bool:
        ratio_ok = self.ratio is None or self.ratio <= 4.0 + 1e-12
        return self.violation is None and self.gap >= -1e-9 and ratio_ok

    def verdict(self) -> str:
        parts = [f"feasible={'yes' if self.violation is None else 'no'}",
                 f"gap={self.gap:.6g}", f"srpt_total={self.srpt_total:.6g}"]
        if self.opt_total is not None:
            parts += [f"opt_total={self.opt_total:.6g}", f"ratio={self.ratio:.6g}"]
        return ("CERTIFIED " if self.ok else "FAILED ") + " ".join(parts)

    def to_csv(self, metadata: Optional[dict] = None) -> str:
        buf = io.StringIO()
        for key in sorted(metadata or {}):
            buf.write(f"# {key}={metadata[key]}\n")
        buf.write("job,size,cap,U,alpha,completion\n")
        cert = self.certificate
        for j, (x, c) in enumerate(self.instance.jobs):
            buf.write(f"{j},{x!r},{c},{cert.U[j]!r},{cert.alpha[j]!r},{cert.completion_times[j]!r}\n")
        return buf.getvalue()


def certify(instance: OfflineInstance, speed: float = 2.0, with_opt: Optional[bool] = None) -> CertificateReport:
    """Certificate at ``speed`` plus, for small instances, the ratio of the
    unit-speed schedule to the brute-force optimum."""
    cert = dual_variables(instance, speed)
    srpt_total = total_response_time(srpt_k_schedule(instance, 1.0))
    if with_opt is None:
        with_opt = len(instance) <= 4
    opt = brute_force_opt(instance) if with_opt else None
    return CertificateReport(instance, cert, verify_dual_feasibility(cert, instance),
                             certificate_gap(cert), srpt_total, opt)

"""Allocation policies, structural classifiers and the Lyapunov drift certificate.

A policy is a finite table of explicit allocations on top of a built-in
default rule (IF, EF or IDLE) that covers every other state. Inelastic-First
and Elastic-First are the empty table over their own rule. This keeps every
policy stationary and deterministic, and lets the simulators hand a policy to
compiled kernels as plain arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

import numpy as np

from .domain import (ATOL, Allocation, InvalidParams, State, SystemParams, load,
                     make_state, validate_allocation)

RULE_CODES = {"IF": 0, "EF": 1, "IDLE": 2}


def inelastic_first(state: State, params: SystemParams) -> Allocation:
    """One server per inelastic job (up to k); leftovers go to the elastic head."""
    i, j = state
    k = params.k
    a_i = min(i, k)
    return Allocation(float(a_i), float(k - a_i) if j > 0 else 0.0)


def elastic_first(state: State, params: SystemParams) -> Allocation:
    """All k servers to the elastic head when one exists, else inelastic FCFS."""
    i, j = state
    if j > 0:
        return Allocation(0.0, float(params.k))
    return Allocation(float(min(i, params.k)), 0.0)


def always_idle(state: State, params: SystemParams) -> Allocation:
    return Allocation(0.0, 0.0)


_RULES = {"IF": inelastic_first, "EF": elastic_first, "IDLE": always_idle}


@dataclass(frozen=True)
class Policy:
    """Stationary deterministic allocation rule over states (i, j).

    ``table`` overrides ``default_rule`` on the listed states.
    ``fcfs_inelastic`` declares that inelastic jobs are served in arrival
    order; it cannot be inferred from the (i, j) map, so it is a flag.
    """

    name: str
    default_rule: str = "IF"
    table: Mapping[State, Allocation] = field(default_factory=dict)
    fcfs_inelastic: bool = True

    def __post_init__(self):
        if self.default_rule not in _RULES:
            raise ValueError(f"unknown default rule {self.default_rule!r}; "
                             f"expected one of {sorted(_RULES)}")
        table = {make_state(*s): Allocation(float(a[0]), float(a[1]))
                 for s, a in dict(self.table).items()}
        object.__setattr__(self, "table", MappingProxyType(table))

    def allocate(self, state: State, params: SystemParams) -> Allocation:
        state = State(*state)
        alloc = self.table.get(state)
        if alloc is None:
            alloc = _RULES[self.default_rule](state, params)
        return alloc

    __call__ = allocate

    @property
    def extent(self) -> tuple[int, int]:
        """Smallest (I, J) such that every table entry has i < I and j < J."""
        if not self.table:
            return (0, 0)
        return (max(s.i for s in self.table) + 1, max(s.j for s in self.table) + 1)

    def arrays(self, params: SystemParams):
        """Table as dense arrays for compiled kernels.

        Returns ``(pi_I, pi_E, defined, rule_code)``; entries with
        ``defined == False`` fall through to the default rule.
        """
        ni, nj = self.extent
        ni, nj = max(ni, 1), max(nj, 1)
        pi_i = np.zeros((ni, nj))
        pi_e = np.zeros((ni, nj))
        defined = np.zeros((ni, nj), dtype=np.bool_)
        for s, a in self.table.items():
            pi_i[s.i, s.j], pi_e[s.i, s.j] = a
            defined[s.i, s.j] = True
        return pi_i, pi_e, defined, RULE_CODES[self.default_rule]


IF = Policy("IF", "IF")
EF = Policy("EF", "EF")
IDLE = Policy("IDLE", "IDLE")


def random_class_p_policy(rng: np.random.Generator, k: int, extent: int = None,
                          default_rule: str = "IF", name: str = None) -> Policy:
    """Random work-conserving policy that serves inelastic jobs FCFS.

    For states with elastic jobs present the inelastic share is drawn from
    {0, ..., min(i, k)} or uniformly from [0, min(i, k)] (fractional time
    sharing) with equal odds; the elastic head gets the rest.
    """
    extent = 3 * k if extent is None else extent
    table = {}
    for i in range(extent):
        for j in range(1, extent):
            cap = min(i, k)
            if rng.random() < 0.5:
                a_i = float(rng.integers(0, cap + 1))
            else:
                a_i = float(rng.uniform(0.0, cap))
            table[State(i, j)] = Allocation(a_i, float(k) - a_i)
    return Policy(name or f"randP{int(rng.integers(1 << 30))}", default_rule, table, True)


# -- table files ---------------------------------------------------------------

class PolicyFileError(ValueError):
    pass


def parse_policy_table(text: str, name: str = "table") -> Policy:
    """Parse ``i j pi_I pi_E`` lines plus one ``* * RULE`` default line."""
    table = {}
    default = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[:2] == ["*", "*"]:
            if len(parts) != 3 or parts[2].upper() not in ("IF", "EF"):
                raise PolicyFileError(f"line {lineno}: default must be '* * IF' or '* * EF'")
            if default is not None:
                raise PolicyFileError(f"line {lineno}: duplicate default rule")
            default = parts[2].upper()
            continue
        if len(parts) != 4:
            raise PolicyFileError(f"line {lineno}: expected 'i j pi_I pi_E', got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            a_i, a_e = float(parts[2]), float(parts[3])
            state = make_state(i, j)
        except ValueError as exc:
            raise PolicyFileError(f"line {lineno}: {exc}") from None
        if state in table:
            raise PolicyFileError(f"line {lineno}: duplicate state {state}")
        table[state] = Allocation(a_i, a_e)
    if default is None:
        raise PolicyFileError("missing default rule line '* * IF' or '* * EF'")
    return Policy(name, default, table, True)


def load_policy_table(path) -> Policy:
    path = Path(path)
    return parse_policy_table(path.read_text(), name=path.stem)


def format_policy_table(policy: Policy) -> str:
    if policy.default_rule not in ("IF", "EF"):
        raise PolicyFileError("only IF/EF defaults can be written to a table file")
    lines = [f"{s.i} {s.j} {a[0]!r} {a[1]!r}" for s, a in sorted(policy.table.items())]
    lines.append(f"* * {policy.default_rule}")
    return "\n".join(lines) + "\n"


# -- classification ------------------------------------------------------------

def departure_rate(alloc: Allocation, params: SystemParams) -> float:
    return alloc.servers_inelastic * params.mu_I + alloc.servers_elastic * params.mu_E


def max_departure_rate(state: State, params: SystemParams) -> float:
    """Largest total departure rate over all feasible allocations in ``state``.

    The feasible set is a polytope and the objective linear, so the optimum
    sits at a vertex: fill the faster class first.
    """
    i, j = state
    k = params.k
    cap_i = min(i, k)
    if j == 0:
        return cap_i * params.mu_I
    if params.mu_I > params.mu_E:
        return cap_i * params.mu_I + (k - cap_i) * params.mu_E
    return k * params.mu_E


def min_elastic_among_greedy(state: State, params: SystemParams) -> float:
    """Smallest elastic allocation among allocations attaining the max departure rate."""
    i, j = state
    k = params.k
    if j == 0:
        return 0.0
    if params.mu_E > params.mu_I:
        return float(k)
    return float(k - min(i, k))


@dataclass
class ClassifyReport:
    work_conserving: bool
    non_idling: bool
    in_class_P: bool
    greedy: bool
    greedy_star: bool
    first_violation: dict = field(default_factory=dict)

    def flags(self) -> dict:
        return dict(work_conserving=self.work_conserving, non_idling=self.non_idling,
                    in_class_P=self.in_class_P, greedy=self.greedy,
                    greedy_star=self.greedy_star)


def _rectangle(horizon_states, k: int) -> Iterable[State]:
    if horizon_states is None:
        horizon_states = (4 * k - 1, 4 * k - 1)
    if isinstance(horizon_states, tuple) and len(horizon_states) == 2 \
            and all(isinstance(v, (int, np.integer)) for v in horizon_states):
        i_max, j_max = horizon_states
        return [State(i, j) for i in range(i_max + 1) for j in range(j_max + 1)]
    return [State(*s) for s in horizon_states]


def classify(policy: Policy, params: SystemParams, horizon_states=None) -> ClassifyReport:
    """Check each structural property by its defining inequalities over a rectangle.

    ``horizon_states`` is ``(I_max, J_max)`` meaning states
    ``{0..I_max} x {0..J_max}`` (default ``4k x 4k`` states) or an explicit
    iterable of states.
    """
    k = params.k
    first: dict = {}
    ok = dict(feasible=True, work_conserving=True, non_idling=True,
              greedy=True, greedy_star=True)

    def fail(flag, state):
        if ok[flag]:
            ok[flag] = False
            first[flag] = state

    for s in _rectangle(horizon_states, k):
        a = policy.allocate(s, params)
        if validate_allocation(s, a, params) is not None:
            fail("feasible", s)
        i, j = s
        total = a.total
        # work conserving: at least min(i, k) busy, and all k busy when elastic work exists
        if total < min(i, k) - ATOL or (j > 0 and abs(total - k) > ATOL):
            fail("work_conserving", s)
        # non-idling: every server is busy unless every eligible job is fully served
        usable = min(k, i + (k if j > 0 else 0))
        if abs(total - usable) > ATOL:
            fail("non_idling", s)
        if abs(departure_rate(a, params) - max_departure_rate(s, params)) > ATOL * max(1.0, k * max(params.mu_I, params.mu_E)):
            fail("greedy", s)
            fail("greedy_star", s)
        elif abs(a.servers_elastic - min_elastic_among_greedy(s, params)) > ATOL:
            fail("greedy_star", s)

    feasible = ok["feasible"]
    wc = feasible and ok["work_conserving"]
    report = ClassifyReport(
        work_conserving=wc,
        non_idling=feasible and ok["non_idling"],
        in_class_P=wc and policy.fcfs_inelastic,
        greedy=feasible and ok["greedy"],
        greedy_star=feasible and ok["greedy_star"],
        first_violation=first,
    )
    if not report.in_class_P:
        first["in_class_P"] = (first.get("work_conserving", first.get("feasible"))
                               if not wc else "fcfs_inelastic flag not set")
    return report


# -- Lyapunov drift ------------------------------------------------------------

def lyapunov_value(state: State, params: SystemParams) -> float:
    i, j = state
    return i / (params.k * params.mu_I) + j / (params.k * params.mu_E)


def lyapunov_drift(policy: Policy, params: SystemParams, state: State) -> float:
    """Sum over outgoing transitions of rate * (V(next) - V(state))."""
    state = State(*state)
    i, j = state
    a_i, a_e = policy.allocate(state, params)
    moves = [(params.lambda_I, State(i + 1, j)), (params.lambda_E, State(i, j + 1))]
    if i > 0:
        moves.append((a_i * params.mu_I, State(i - 1, j)))
    if j > 0:
        moves.append((a_e * params.mu_E, State(i, j - 1)))
    v = lyapunov_value(state, params)
    return math.fsum(rate * (lyapunov_value(nxt, params) - v) for rate, nxt in moves if rate)


@dataclass(frozen=True)
class DriftReport:
    epsilon: float
    worst_state: State
    inside_set_max: float


class CertificateFailed(RuntimeError):
    def __init__(self, state: State, drift: float):
        super().__init__(f"drift {drift:.6g} >= 0 at state {tuple(state)} outside the finite set")
        self.state = state
        self.drift = drift


def drift_certificate(policy: Policy, params: SystemParams, I_max: int, J_max: int) -> DriftReport:
    """Scan states 0..I_max x 0..J_max and certify negative drift off {i + j <= k}."""
    if load(params) >= 1:
        raise InvalidParams("drift certificate needs load < 1")
    k = params.k
    eps = math.inf
    worst: Optional[State] = None
    inside = -math.inf
    for i in range(I_max + 1):
        for j in range(J_max + 1):
            s = State(i, j)
            d = lyapunov_drift(policy, params, s)
            if i + j <= k:
                inside = max(inside, d)
                continue
            if d >= 0:
                raise CertificateFailed(s, d)
            if -d < eps:
                eps, worst = -d, s
    if worst is None:
        raise ValueError("scan rectangle has no states outside the finite set")
    return DriftReport(eps, worst, inside)

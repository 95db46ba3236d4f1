"""Experiment runners behind the command line tool.

Each runner returns a result object holding rows plus the CSV text; files
are written only by ``write_outputs``. CSV text depends only on the experiment settings
(no timestamps), so identical settings give identical bytes.
"""
from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import offline
from .analytic import (InfeasibleMoments, NoConvergence, SingularBoundary, Unstable,
                       counterexample_values, mean_response_ef, mean_response_if,
                       mm1_mean_response, mmk_mean_response)
from .domain import InvalidParams, State, SystemParams
from .policies import EF, IF, random_class_p_policy
from .simulator import (GENERATOR_ID, SimConfig, check_dominance, control_variate_mean,
                        generate_arrivals, simulate_ctmc, simulate_sample_path, transient_estimate)
from .svg import line_chart, winner_map

DEFAULT_GRID = tuple(0.25 * n for n in range(1, 17))
GRID_COLUMNS = "mu_I,mu_E,lambda_I,lambda_E,k,rho,T_IF,T_EF,winner"

# events per replication and replication cap for the simulation check,
# chosen so the 95% half-width of mean T lands near 0.5% within budget
VALIDATE_BUDGET = {0.5: (400_000, 40), 0.7: (1_000_000, 40), 0.9: (4_000_000, 30)}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    out: str = "out"
    seed: int = 0
    rho: Tuple[float, ...] = (0.5, 0.7, 0.9)
    k: int = 4
    grid: Tuple[float, ...] = DEFAULT_GRID
    mu_E: float = 1.0
    workers: int = 1
    # highk
    k_values: Tuple[int, ...] = tuple(range(2, 17))
    mu_pairs: Tuple[Tuple[float, float], ...] = ((0.25, 1.0), (3.25, 1.0))
    # validate
    events: int = 0  # 0: per-load defaults from VALIDATE_BUDGET
    replications: int = 10
    max_replications: int = 0
    target_rel_halfwidth: float = 0.005
    tolerance: float = 0.01
    # counterexample and dominance
    mu_I: float = 1.0
    transient_replications: int = 1_000_000
    # dominance
    n_seeds: int = 1000
    n_random_policies: int = 5
    horizon: float = 1000.0
    # offline-certify
    instance: Optional[str] = None
    n_instances: int = 10_000
    max_jobs: int = 50
    speed: float = 2.0
    exhaustive: bool = False

    def __post_init__(self):
        if self.kind not in RUNNERS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.k < 1:
            raise ValueError("k must be positive")
        for r in self.rho:
            if not 0 < r < 1:
                raise ValueError(f"load {r} outside (0, 1)")
        if any(m <= 0 for m in self.grid) or self.mu_E <= 0:
            raise ValueError("service rates must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class ExperimentResult:
    name: str
    ok: bool
    summary: List[str]
    files: Dict[str, str] = field(default_factory=dict)
    rows: list = field(default_factory=list)


def _meta_lines(spec: ExperimentSpec, **extra) -> str:
    items = {"kind": spec.kind, "seed": spec.seed, "k": spec.k}
    items.update(extra)
    return "".join(f"# {key}={items[key]}\n" for key in sorted(items))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _map(spec: ExperimentSpec, fn: Callable, items: Sequence) -> list:
    """Ordered map, optionally over a process pool."""
    if spec.workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class GridRow:
    mu_I: float
    mu_E: float
    lambda_I: float
    lambda_E: float
    k: int
    rho: float
    T_IF: float
    T_EF: float
    winner: str

    def csv(self) -> str:
        return ",".join(_fmt(getattr(self, f.name)) for f in fields(self))


def compare_point(args) -> GridRow:
    rho, mu_i, mu_e, k = args
    p = SystemParams.at_load(rho, mu_i, mu_e, k)
    try:
        t_if = mean_response_if(p).T
        t_ef = mean_response_ef(p).T
    except (InfeasibleMoments, NoConvergence, SingularBoundary, Unstable):
        return GridRow(mu_i, mu_e, p.lambda_I, p.lambda_E, k, rho, math.nan, math.nan, "error")
    if abs(t_if - t_ef) <= 1e-12 * max(t_if, t_ef):
        who = "tie"
    else:
        who = "IF" if t_if < t_ef else "EF"
    return GridRow(mu_i, mu_e, p.lambda_I, p.lambda_E, k, rho, t_if, t_ef, who)


def _grid_csv(spec, rows, **extra) -> str:
    return _meta_lines(spec, **extra) + GRID_COLUMNS + "\n" + "".join(r.csv() + "\n" for r in rows)


def run_heatmap(spec: ExperimentSpec) -> ExperimentResult:
    pts = [(rho, mi, me, spec.k) for rho in spec.rho for me in spec.grid for mi in spec.grid]
    rows = _map(spec, compare_point, pts)
    files = {"heatmap.csv": _grid_csv(spec, rows, rho=list(spec.rho), grid=list(spec.grid))}
    summary = []
    for rho in spec.rho:
        sub = [r for r in rows if r.rho == rho]
        files[f"heatmap_rho{rho}.svg"] = winner_map(
            [(r.mu_I, r.mu_E, r.winner) for r in sub], f"winner at load {rho}, k={spec.k}")
        counts = {w: sum(r.winner == w for r in sub) for w in ("IF", "EF", "tie", "error")}
        summary.append(f"rho={rho}: " + " ".join(f"{w}={n}" for w, n in counts.items()))
    ok = not any(r.winner == "error" for r in rows)
    return ExperimentResult("heatmap", ok, summary, files, rows)


def run_lines(spec: ExperimentSpec) -> ExperimentResult:
    pts = [(rho, mi, spec.mu_E, spec.k) for rho in spec.rho for mi in spec.grid]
    rows = _map(spec, compare_point, pts)
    files = {"lines.csv": _grid_csv(spec, rows, rho=list(spec.rho), mu_E=spec.mu_E)}
    summary = []
    for rho in spec.rho:
        sub = [r for r in rows if r.rho == rho]
        files[f"lines_rho{rho}.svg"] = line_chart(
            {"IF": [(r.mu_I, r.T_IF) for r in sub], "EF": [(r.mu_I, r.T_EF) for r in sub]},
            f"mean response time, load {rho}, mu_E={spec.mu_E}", "mu_I", "E[T]")
        ef = [r.mu_I for r in sub if r.winner == "EF"]
        summary.append(f"rho={rho}: EF wins for mu_I in {ef if ef else 'none'}")
    return ExperimentResult("lines", not any(r.winner == "error" for r in rows), summary, files, rows)


def run_highk(spec: ExperimentSpec) -> ExperimentResult:
    rho = spec.rho[-1] if spec.rho else 0.9
    pts = [(rho, mi, me, k) for mi, me in spec.mu_pairs for k in spec.k_values]
    rows = _map(spec, compare_point, pts)
    files = {"highk.csv": _grid_csv(spec, rows, rho=rho, k_values=list(spec.k_values))}
    series = {}
    for mi, me in spec.mu_pairs:
        sub = [r for r in rows if (r.mu_I, r.mu_E) == (mi, me)]
        series[f"IF mu_I={mi}"] = [(r.k, r.T_IF) for r in sub]
        series[f"EF mu_I={mi}"] = [(r.k, r.T_EF) for r in sub]
    files["highk.svg"] = line_chart(series, f"mean response time vs k, load {rho}", "k", "E[T]")
    summary = [f"mu=({r.mu_I},{r.mu_E}) k={r.k}: IF={r.T_IF:.6g} EF={r.T_EF:.6g} -> {r.winner}"
               for r in rows]
    return ExperimentResult("highk", not any(r.winner == "error" for r in rows), summary, files, rows)


def _twelfths(value) -> str:
    scaled = value * 12
    return f"{scaled.numerator}/12" if scaled.denominator == 1 else str(value)


def run_counterexample(spec: ExperimentSpec) -> ExperimentResult:
    vals = counterexample_values(spec.mu_I)
    params = SystemParams(0.0, 0.0, spec.mu_I, 2.0 * spec.mu_I, 2)
    start = State(2, 1)
    est_if = transient_estimate(IF, start, params, spec.transient_replications, spec.seed)
    est_ef = transient_estimate(EF, start, params, spec.transient_replications, spec.seed)
    verdict = vals.T_EF < vals.T_IF
    summary = [
        f"closed form total: IF={_twelfths(vals.T_IF_exact)} ({vals.T_IF:.6f}) "
        f"EF={_twelfths(vals.T_EF_exact)} ({vals.T_EF:.6f})",
        f"closed form per job: IF={vals.T_IF_exact / 3} EF={vals.T_EF_exact / 3}",
        f"simulated total: IF={est_if.mean:.6f} +- {est_if.ci_halfwidth:.6f} "
        f"EF={est_ef.mean:.6f} +- {est_ef.ci_halfwidth:.6f} ({spec.transient_replications} replications)",
        f"EF < IF: {'true' if verdict else 'false'}",
    ]
    csv = (_meta_lines(spec, mu_I=spec.mu_I, replications=spec.transient_replications,
                       generator=GENERATOR_ID)
           + "policy,closed_form_total,closed_form_per_job,sim_total,sim_ci\n"
           + f"IF,{vals.T_IF!r},{vals.T_IF / 3!r},{est_if.mean!r},{est_if.ci_halfwidth!r}\n"
           + f"EF,{vals.T_EF!r},{vals.T_EF / 3!r},{est_ef.mean!r},{est_ef.ci_halfwidth!r}\n")
    sim_ok = all(abs(e.mean - v) <= e.ci_halfwidth * 1.5 + 0.005 * v
                 for e, v in ((est_if, vals.T_IF), (est_ef, vals.T_EF)))
    return ExperimentResult("counterexample", verdict and sim_ok, summary,
                            {"counterexample.csv": csv}, [vals, est_if, est_ef])


@dataclass(frozen=True)
class ValidateRow:
    mu_I: float
    mu_E: float
    lambda_I: float
    lambda_E: float
    k: int
    rho: float
    policy: str
    T_analytic: float
    T_sim: float
    ci_halfwidth: float
    T_sim_raw: float
    ci_raw: float
    replications: int
    rel_err: float

    def csv(self) -> str:
        return ",".join(_fmt(getattr(self, f.name)) for f in fields(self))


def validate_budget(spec: ExperimentSpec, rho: float) -> Tuple[int, int]:
    events, cap = VALIDATE_BUDGET.get(round(rho, 6), (4_000_000, 30))
    if spec.events:
        events = spec.events
    if spec.max_replications:
        cap = spec.max_replications
    return events, max(cap, spec.replications)


def validate_point(args) -> ValidateRow:
    spec, rho, mu_i, policy_name, index = args
    p = SystemParams.at_load(rho, mu_i, spec.mu_E, spec.k)
    policy = IF if policy_name == "IF" else EF
    analytic = (mean_response_if(p) if policy_name == "IF" else mean_response_ef(p)).T
    events, cap = validate_budget(spec, rho)
    # seed per point so the grid can be split across workers
    seed = int(np.random.SeedSequence([spec.seed, index]).generate_state(2, np.uint64)[0])
    cfg = SimConfig(horizon=events, seed=seed, replications=spec.replications,
                    target_rel_halfwidth=spec.target_rel_halfwidth, max_replications=cap)
    st = simulate_ctmc(policy, p, cfg)
    t_sim, ci = _controlled_mean_T(st, p, policy_name)
    rel = abs(analytic - t_sim) / t_sim
    return ValidateRow(mu_i, spec.mu_E, p.lambda_I, p.lambda_E, spec.k, rho, policy_name,
                       analytic, t_sim, ci, st.mean_T, st.ci("mean_T"), st.replications, rel)


def _controlled_mean_T(st, p: SystemParams, policy_name: str) -> Tuple[float, float]:
    """Mean response time with the prioritised class count as control variate.

    That class sees an M/M/k (IF) or an M/M/1 at rate k mu_E (EF), so its
    mean count is known exactly.
    """
    if st.replications < 3:
        return st.mean_T, st.ci("mean_T")
    if policy_name == "IF":
        control = st.per_replication["mean_N_I"]
        known = p.lambda_I * mmk_mean_response(p.lambda_I, p.mu_I, p.k)
    else:
        control = st.per_replication["mean_N_E"]
        known = p.lambda_E * mm1_mean_response(p.lambda_E, p.k * p.mu_E)
    return control_variate_mean(st.per_replication["mean_T"], control, known)


def run_validate(spec: ExperimentSpec) -> ExperimentResult:
    pts = []
    for rho in spec.rho:
        for mi in spec.grid:
            for name in ("IF", "EF"):
                pts.append((spec, rho, mi, name, len(pts)))
    rows = _map(spec, validate_point, pts)
    worst = max(rows, key=lambda r: r.rel_err)
    ok = worst.rel_err <= spec.tolerance
    csv = (_meta_lines(spec, rho=list(spec.rho), grid=list(spec.grid), mu_E=spec.mu_E,
                       generator=GENERATOR_ID, target_rel_halfwidth=spec.target_rel_halfwidth)
           + ",".join(f.name for f in fields(ValidateRow)) + "\n"
           + "".join(r.csv() + "\n" for r in rows))
    summary = [f"{len(rows)} comparisons over {len(rows) // 2} grid points",
               f"max relative error {worst.rel_err:.4%} at rho={worst.rho} mu_I={worst.mu_I} "
               f"{worst.policy} (tolerance {spec.tolerance:.2%})"]
    return ExperimentResult("validate", ok, summary, {"validate.csv": csv}, rows)


def dominance_policies(spec: ExperimentSpec):
    rng = np.random.default_rng(spec.seed)
    return [EF] + [random_class_p_policy(rng, spec.k, name=f"P{n + 1}")
                   for n in range(spec.n_random_policies)]


def _dominance_seed(args):
    spec, n, policies, params = args
    arrivals = generate_arrivals(params, spec.horizon, [spec.seed, n])
    ref = simulate_sample_path(IF, arrivals, params)
    out = []
    for pol in policies:
        v = check_dominance(ref, simulate_sample_path(pol, arrivals, params))
        out.append((n, pol.name, v))
    return out


def run_dominance(spec: ExperimentSpec) -> ExperimentResult:
    rho = spec.rho[0] if len(spec.rho) == 1 else 0.8
    params = SystemParams.at_load(rho, spec.mu_I, spec.mu_E, spec.k)
    policies = dominance_policies(spec)
    chunks = _map(spec, _dominance_seed, [(spec, n, policies, params) for n in range(spec.n_seeds)])
    rows = [r for chunk in chunks for r in chunk]
    bad = [r for r in rows if r[2] is not None]
    lines = ["sequence,policy,violation,time,quantity"]
    for n, name, v in rows:
        if v is None:
            lines.append(f"{n},{name},0,,")
        else:
            lines.append(f"{n},{name},1,{v.time!r},{v.quantity}")
    csv = _meta_lines(spec, rho=rho, mu_I=params.mu_I, mu_E=params.mu_E,
                      horizon=spec.horizon, policies=[p.name for p in policies]) + "\n".join(lines) + "\n"
    summary = [f"{spec.n_seeds} arrival sequences x {len(policies)} policies: {len(bad)} violations"]
    summary += [f"violation: sequence {n} policy {name} at t={v.time:.6g} ({v.quantity})"
                for n, name, v in bad[:10]]
    return ExperimentResult("dominance", not bad, summary, {"dominance.csv": csv}, rows)


def run_offline_certify(spec: ExperimentSpec) -> ExperimentResult:
    if spec.instance:
        instances = [offline.load_instance(spec.instance)]
    elif spec.exhaustive:
        instances = list(offline.enumerate_small_instances())
    else:
        rng = np.random.default_rng(spec.seed)
        instances = [offline.random_instance(rng, spec.max_jobs) for _ in range(spec.n_instances)]
    reports = [offline.certify(inst, spec.speed) for inst in instances]
    lines = ["instance,n_jobs,k,feasible,gap,srpt_total,opt_total,ratio"]
    for n, rep in enumerate(reports):
        opt = "" if rep.opt_total is None else repr(rep.opt_total)
        ratio = "" if rep.ratio is None else repr(rep.ratio)
        lines.append(f"{n},{len(rep.instance)},{rep.instance.k},{int(rep.violation is None)},"
                     f"{rep.gap!r},{rep.srpt_total!r},{opt},{ratio}")
    csv = _meta_lines(spec, speed=spec.speed, source=spec.instance or
                      ("exhaustive" if spec.exhaustive else f"random x{spec.n_instances}")) \
        + "\n".join(lines) + "\n"
    files = {"offline.csv": csv}
    if len(reports) == 1:
        files["certificate.csv"] = reports[0].to_csv({"speed": spec.speed})
    failed = [n for n, rep in enumerate(reports) if not rep.ok]
    ratios = [rep.ratio for rep in reports if rep.ratio is not None]
    summary = [f"{len(reports)} instances: {len(failed)} failed",
               f"min gap {min(rep.gap for rep in reports):.3g}"]
    if ratios:
        summary.append(f"max ratio {max(ratios):.6g}")
    if len(reports) == 1:
        summary.append(reports[0].verdict())
    return ExperimentResult("offline-certify", not failed, summary, files, reports)


RUNNERS = {
    "heatmap": run_heatmap,
    "lines": run_lines,
    "highk": run_highk,
    "counterexample": run_counterexample,
    "validate": run_validate,
    "dominance": run_dominance,
    "offline-certify": run_offline_certify,
}


def run(spec: ExperimentSpec) -> ExperimentResult:
    return RUNNERS[spec.kind](spec)


def write_outputs(result: ExperimentResult, out_dir: str) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in sorted(result.files.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths

"""End-to-end acceptance checks, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from elasticsched import experiments
from elasticsched.analytic import (busy_period_moments, coxian_moments, counterexample_values,
                                   fit_coxian, homogeneous_qbd, solve_qbd)
from elasticsched.domain import State, SystemParams
from elasticsched.offline import (OfflineInstance, brute_force_opt, certificate_gap,
                                  dual_variables, enumerate_small_instances, random_instance,
                                  srpt_k_schedule, total_response_time, verify_dual_feasibility)
from elasticsched.policies import EF, IF, lyapunov_drift, random_class_p_policy
from elasticsched.simulator import SimConfig, simulate_ctmc, transient_estimate
from test_qbd import mmk_blocks, mmk_probs


def report(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def test_criterion_01_counterexample():
    vals = counterexample_values(1.0)
    exact = vals.T_IF_exact == Fraction(35, 12) and vals.T_EF_exact == Fraction(33, 12)
    params = SystemParams(0.0, 0.0, 1.0, 2.0, 2)
    start = time.perf_counter()
    est_if = transient_estimate(IF, State(2, 1), params, 1_000_000, seed=1)
    est_ef = transient_estimate(EF, State(2, 1), params, 1_000_000, seed=2)
    elapsed = time.perf_counter() - start
    err_if = abs(est_if.mean - 35 / 12) / (35 / 12)
    err_ef = abs(est_ef.mean - 33 / 12) / (33 / 12)
    ok = exact and err_if <= 0.005 and err_ef <= 0.005 and elapsed < 60
    twelfths = experiments._twelfths
    report(1, "counterexample exactness", ok,
           f"closed form {twelfths(vals.T_IF_exact)}, {twelfths(vals.T_EF_exact)}; "
           f"simulated {est_if.mean:.5f} ({err_if:.3%}), {est_ef.mean:.5f} ({err_ef:.3%}); "
           f"{elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_02_analytic_vs_simulation():
    spec = experiments.ExperimentSpec("validate", seed=2024)
    start = time.perf_counter()
    res = experiments.run_validate(spec)
    elapsed = time.perf_counter() - start
    points = {(r.rho, r.mu_I, r.mu_E) for r in res.rows}
    worst = max(res.rows, key=lambda r: r.rel_err)
    ok = len(points) >= 48 and worst.rel_err <= 0.01 and elapsed < 1800
    report(2, "analytic vs simulation", ok,
           f"{len(points)} points x 2 policies, max rel err {worst.rel_err:.3%} "
           f"(rho={worst.rho}, mu_I={worst.mu_I}, {worst.policy}); {elapsed:.0f}s")


def test_criterion_03_optimality_region():
    res = experiments.run_heatmap(experiments.ExperimentSpec("heatmap"))
    rows = res.rows
    region = [r for r in rows if r.mu_I >= r.mu_E]
    if_ok = all(r.T_IF <= r.T_EF for r in region)
    ef = {rho: {(r.mu_I, r.mu_E) for r in rows if r.rho == rho and r.T_EF < r.T_IF}
          for rho in (0.5, 0.9)}
    some_ef = any(r.mu_I < r.mu_E for r in rows if r.rho == 0.9 and r.T_EF < r.T_IF)
    nested = ef[0.5] <= ef[0.9]
    ok = if_ok and some_ef and nested and not any(r.winner == "error" for r in rows)
    report(3, "optimality region", ok,
           f"{len(region)} points with mu_I >= mu_E all IF; EF wins {len(ef[0.5])} points at "
           f"rho=0.5 and {len(ef[0.9])} at rho=0.9; nested={nested}")


def test_criterion_04_dominance():
    spec = experiments.ExperimentSpec("dominance", n_seeds=1000, horizon=1000.0, rho=(0.8,), seed=7)
    res = experiments.run_dominance(spec)
    bad = [r for r in res.rows if r[2] is not None]
    policies = sorted({r[1] for r in res.rows})
    ok = not bad and len(res.rows) == 1000 * 6
    report(4, "sample-path dominance", ok,
           f"1000 sequences x {len(policies)} policies ({', '.join(policies)}): {len(bad)} violations")


def test_criterion_05_work_count_identity():
    params = SystemParams.at_load(0.7, 0.5, 2.0, 4)
    rng = np.random.default_rng(5)
    policies = [IF, EF] + [random_class_p_policy(rng, 4, name=f"P{n}") for n in range(1, 4)]
    cfg = SimConfig(horizon=1_000_000, replications=20, seed=99)
    failures = []
    worst = 0.0
    for pol in policies:
        s = simulate_ctmc(pol, params, cfg)
        for mu, w, n, cw, cn in ((params.mu_I, s.mean_W_I, s.mean_N_I, s.ci("mean_W_I"), s.ci("mean_N_I")),
                                 (params.mu_E, s.mean_W_E, s.mean_N_E, s.ci("mean_W_E"), s.ci("mean_N_E"))):
            gap = abs(mu * w - n)
            allowed = mu * cw + cn  # the two 95% intervals overlap
            worst = max(worst, gap / allowed)
            if gap > allowed:
                failures.append(pol.name)
    report(5, "work/count identity", not failures,
           f"5 policies x 2 classes, largest |mu W - N| / (sum of CI half-widths) = {worst:.3f}")


def test_criterion_06_drift_certificate():
    worst = 0.0
    count = 0
    for rho in (0.5, 0.9):
        for mu_i, mu_e in ((1.0, 1.0), (0.5, 2.0), (3.0, 1.0)):
            params = SystemParams.at_load(rho, mu_i, mu_e, 4)
            for pol in (IF, EF):
                for i in range(40):
                    for j in range(40):
                        if i + j > params.k:
                            d = lyapunov_drift(pol, params, State(i, j))
                            worst = max(worst, abs(d - (params.rho - 1)))
                            count += 1
    report(6, "drift certificate", worst <= 1e-12,
           f"{count} states outside F checked, max |dV - (rho - 1)| = {worst:.2e}")


def test_criterion_07_qbd_oracles():
    worst = 0.0
    for lam, mu in ((0.5, 1.0), (0.9, 1.0), (2.0, 3.0)):
        dist = solve_qbd(homogeneous_qbd([[lam]], [[-(lam + mu)]], [[mu]]))
        r = lam / mu
        for level in range(60):
            worst = max(worst, abs(dist.level_probs(level)[0] - (1 - r) * r ** level))
    for lam, mu, k in ((1.8, 1.0, 2), (3.6, 1.0, 4), (7.0, 1.0, 8), (14.4, 1.0, 16)):
        dist = solve_qbd(mmk_blocks(lam, mu, k))
        expected = mmk_probs(lam, mu, k, 4 * k + 20)
        got = np.array([dist.level_probs(l)[0] for l in range(expected.size)])
        worst = max(worst, float(np.abs(got - expected).max()))
    report(7, "QBD oracle equivalence", worst <= 1e-8, f"max abs deviation {worst:.2e}")


def _conditional_busy_moments(lam, mu, n, rng):
    """Monte-Carlo busy-period moments.

    Each busy period is generated as a queue-length walk; given its number
    of transitions ``L`` the length is Gamma(L, lam + mu), whose moments are
    averaged instead of raw powers.
    """
    steps = np.zeros(n, dtype=np.int64)
    level = np.ones(n, dtype=np.int64)
    active = np.arange(n)
    p_up = lam / (lam + mu)
    while active.size:
        steps[active] += 1
        level[active] += np.where(rng.random(active.size) < p_up, 1, -1)
        active = active[level[active] > 0]
    L = steps.astype(float)
    c = lam + mu
    return (L / c).mean(), (L * (L + 1) / c ** 2).mean(), (L * (L + 1) * (L + 2) / c ** 3).mean()


def test_criterion_08_coxian_and_busy_period():
    worst_fit = 0.0
    for n in range(1, 10):
        m = busy_period_moments(n / 10, 1.0)
        back = coxian_moments(fit_coxian(m))
        worst_fit = max(worst_fit, max(abs(a / b - 1) for a, b in zip(back, m)))
    mc = _conditional_busy_moments(0.5, 1.0, 1_000_000, np.random.default_rng(0))
    closed = busy_period_moments(0.5, 1.0)
    mc_err = [abs(a / b - 1) for a, b in zip(mc, closed)]
    ok = worst_fit <= 1e-9 and max(mc_err) <= 0.01
    report(8, "Coxian round-trip and busy-period moments", ok,
           f"max refit error {worst_fit:.1e}; Monte Carlo (1e6 periods, lambda/mu=0.5) "
           f"errors {', '.join(f'{e:.3%}' for e in mc_err)}")


def test_criterion_09_offline():
    worst_ratio = 0.0
    n_small = 0
    for inst in enumerate_small_instances():
        worst_ratio = max(worst_ratio, total_response_time(srpt_k_schedule(inst)) / brute_force_opt(inst))
        n_small += 1
    rng = np.random.default_rng(12345)
    infeasible = 0
    min_gap = math.inf
    for _ in range(10_000):
        inst = random_instance(rng, 50, 8)
        infeasible += verify_dual_feasibility(dual_variables(inst, 2.0), inst) is not None
        exact = OfflineInstance(tuple(Fraction(x) for x in inst.sizes), inst.caps, inst.k)
        min_gap = min(min_gap, certificate_gap(dual_variables(exact, Fraction(2))))
    ok = worst_ratio <= 4 and infeasible == 0 and min_gap >= 0
    report(9, "offline approximation and certificate", ok,
           f"{n_small} exhaustive instances max ratio {worst_ratio:.4f}; 10000 random instances: "
           f"{infeasible} infeasible, min exact gap {min_gap}")


DETERMINISM = {
    "heatmap": {},
    "lines": {},
    "highk": {"rho": (0.9,)},
    "counterexample": {"transient_replications": 100_000},
    "validate": {"grid": (0.5, 2.0), "rho": (0.7,), "events": 100_000, "replications": 3,
                 "max_replications": 4, "tolerance": 0.05},
    "dominance": {"n_seeds": 20, "rho": (0.8,)},
    "offline-certify": {"n_instances": 200},
}


def test_criterion_10_determinism():
    differing = []
    for kind, extra in DETERMINISM.items():
        spec = experiments.ExperimentSpec(kind, seed=31337, **extra)
        a = experiments.run(spec).files
        b = experiments.run(spec).files
        if a != b or not a:
            differing.append(kind)
    report(10, "deterministic CSV output", not differing,
           f"{len(DETERMINISM)} experiments re-run with the same seed; differing: {differing or 'none'}")

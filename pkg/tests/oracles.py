"""Reference implementations used only by the tests.

They share no code with the package beyond the public policy objects.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve


def erlang_c_direct(k, a):
    """Erlang-C by its textbook sum."""
    top = a ** k / math.factorial(k) * k / (k - a)
    return top / (sum(a ** n / math.factorial(n) for n in range(k)) + top)


def truncated_chain_means(policy, params, n_max):
    """Exact stationary (E[N_I], E[N_E]) of the two-class chain cut at ``n_max``
    jobs per class (arrivals beyond the cut are dropped)."""
    size = n_max + 1
    idx = lambda i, j: i * size + j
    rows, cols, vals = [], [], []

    def add(a, b, r):
        if r > 0:
            rows.append(a)
            cols.append(b)
            vals.append(r)

    for i in range(size):
        for j in range(size):
            s = idx(i, j)
            a_i, a_e = policy.allocate((i, j), params)
            if i < n_max:
                add(s, idx(i + 1, j), params.lambda_I)
            if j < n_max:
                add(s, idx(i, j + 1), params.lambda_E)
            if i > 0:
                add(s, idx(i - 1, j), a_i * params.mu_I)
            if j > 0:
                add(s, idx(i, j - 1), a_e * params.mu_E)
    n = size * size
    q = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    q = q - sparse.diags(np.asarray(q.sum(axis=1)).ravel())
    a = q.T.tolil()
    a[0, :] = np.ones(n)
    b = np.zeros(n)
    b[0] = 1.0
    pi = spsolve(a.tocsr(), b)
    grid_i, grid_j = np.divmod(np.arange(n), size)
    return float(pi @ grid_i), float(pi @ grid_j), float(pi[grid_i == n_max].sum() + pi[grid_j == n_max].sum())


def fluid_oracle(policy, params, events):
    """Exact rational fluid simulation of a fixed job list.

    ``events`` holds ``(time, 'inelastic'|'elastic', size)``. Returns the
    completion time of each job as ``Fraction``.
    """
    pending = sorted(((Fraction(t), n, c, Fraction(s)) for n, (t, c, s) in enumerate(events)))
    inel, elas = [], []  # [index, remaining] in arrival order
    done = {}
    t = Fraction(0)
    while pending or inel or elas:
        while pending and pending[0][0] == t and not _any_zero(inel, elas):
            _, n, c, s = pending.pop(0)
            (elas if c == "elastic" else inel).append([n, s])
        a_i, a_e = policy.allocate((len(inel), len(elas)), params)
        a_i, a_e = Fraction(a_i), Fraction(a_e)
        rates = []
        left = a_i
        for job in inel:
            r = min(Fraction(1), left)
            rates.append(r)
            left -= r
        e_rate = a_e if elas else Fraction(0)
        candidates = [job[1] / r for job, r in zip(inel, rates) if r > 0]
        if elas and e_rate > 0:
            candidates.append(elas[0][1] / e_rate)
        dt = min(candidates) if candidates else None
        if pending and (dt is None or pending[0][0] - t < dt):
            dt = pending[0][0] - t
        if dt is None:
            raise RuntimeError("jobs stuck with no service")
        for job, r in zip(inel, rates):
            job[1] -= r * dt
        if elas:
            elas[0][1] -= e_rate * dt
        t += dt
        for job in [j for j in inel if j[1] == 0]:
            done[job[0]] = t
            inel.remove(job)
        if elas and elas[0][1] == 0:
            done[elas.pop(0)[0]] = t
    return [done[n] for n in range(len(events))]


def _any_zero(inel, elas):
    return any(j[1] == 0 for j in inel) or any(j[1] == 0 for j in elas)


def busy_periods(lam, mu, n, rng):
    """Sample ``n`` M/M/1 busy periods by walking the queue length."""
    length = rng.exponential(1.0 / mu, n) * 0.0
    level = np.ones(n, dtype=np.int64)
    active = np.arange(n)
    rate = lam + mu
    while active.size:
        length[active] += rng.exponential(1.0 / rate, active.size)
        up = rng.random(active.size) < lam / rate
        level[active] += np.where(up, 1, -1)
        active = active[level[active] > 0]
    return length

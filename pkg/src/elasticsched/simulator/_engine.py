"""Compiled job-level fluid engine shared by all simulators.

Jobs are kept in two FCFS buffers (inelastic, elastic). Each buffer stores
remaining size, arrival time and the arrival index per job in slots
``head .. head + n - 1``. Between events every served job's remaining size
drops linearly at its allocated rate; the next event is the earliest of the
next arrival and the earliest predicted completion.

Service order inside a class follows the class-P rule: with ``a`` servers
for inelastic work, the ``floor(a)`` oldest inelastic jobs get one server
each and the fractional remainder goes to the next oldest. Elastic servers
all go to the oldest elastic job.
"""
import numpy as np
from numba import njit

# Numerical slack used when deciding that a job has finished.
_EPS = 1e-12

RULE_IF = 0
RULE_EF = 1
RULE_IDLE = 2


@njit(cache=True)
def allocation(i, j, k, tab_i, tab_e, tab_def, rule):
    if i < tab_def.shape[0] and j < tab_def.shape[1] and tab_def[i, j]:
        return tab_i[i, j], tab_e[i, j]
    if rule == RULE_IF:
        a = min(i, k)
        return float(a), float(k - a) if j > 0 else 0.0
    if rule == RULE_EF:
        if j > 0:
            return 0.0, float(k)
        return float(min(i, k)), 0.0
    return 0.0, 0.0


@njit(cache=True)
def _push(rem, arr, ids, head, n, size, t, idx):
    cap = rem.shape[0]
    if head + n >= cap:
        if head > cap // 2:
            rem[0:n] = rem[head:head + n]
            arr[0:n] = arr[head:head + n]
            ids[0:n] = ids[head:head + n]
        else:
            new_rem = np.empty(2 * cap)
            new_arr = np.empty(2 * cap)
            new_ids = np.empty(2 * cap, dtype=np.int64)
            new_rem[0:n] = rem[head:head + n]
            new_arr[0:n] = arr[head:head + n]
            new_ids[0:n] = ids[head:head + n]
            rem, arr, ids = new_rem, new_arr, new_ids
        head = 0
    rem[head + n] = size
    arr[head + n] = t
    ids[head + n] = idx
    return rem, arr, ids, head


@njit(cache=True)
def _remove(rem, arr, ids, head, offset):
    # shift the older jobs right by one so FCFS order is kept
    for q in range(head + offset, head, -1):
        rem[q] = rem[q - 1]
        arr[q] = arr[q - 1]
        ids[q] = ids[q - 1]
    return head + 1


@njit(cache=True)
def _inelastic_rate(offset, a_i):
    whole = np.floor(a_i + 1e-12)
    if offset < whole:
        return 1.0
    if offset == whole:
        frac = a_i - whole
        return frac if frac > 1e-12 else 0.0
    return 0.0


@njit(cache=True)
def _n_served_inelastic(a_i, n_i):
    m = int(np.floor(a_i + 1e-12))
    if a_i - m > 1e-12:
        m += 1
    return min(m, n_i)


@njit(cache=True)
def _next_completion(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e):
    """Time to the earliest completion and who completes (-1 = elastic head)."""
    best = np.inf
    who = -2
    m = _n_served_inelastic(a_i, n_i)
    for q in range(m):
        r = _inelastic_rate(q, a_i)
        if r > 0.0:
            dt = rem_i[head_i + q] / r
            if dt < best:
                best = dt
                who = q
    if n_e > 0 and a_e > 1e-12:
        dt = rem_e[head_e] / a_e
        if dt < best:
            best = dt
            who = -1
    return best, who


@njit(cache=True)
def _advance(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e, dt):
    m = _n_served_inelastic(a_i, n_i)
    for q in range(m):
        r = _inelastic_rate(q, a_i)
        if r > 0.0:
            rem_i[head_i + q] -= r * dt
    if n_e > 0 and a_e > 0.0:
        rem_e[head_e] -= a_e * dt


@njit(cache=True)
def _served_inelastic_rate(a_i, n_i):
    return min(a_i, float(n_i))


@njit(cache=True)
def steady_state(lam_i, lam_e, mu_i, mu_e, k, tab_i, tab_e, tab_def, rule,
                 n_events, warm_events, seed, guard):
    """One replication of the open system.

    Returns ``[span, area_NI, area_NE, area_WI, area_WE, sumT_I, cnt_I,
    sumT_E, cnt_E, unstable, events_done]`` where areas are time integrals
    after warmup and ``sumT``/``cnt`` are tagged response-time sums.
    """
    np.random.seed(seed)
    out = np.zeros(11)
    cap = 1024
    rem_i = np.empty(cap)
    arr_i = np.empty(cap)
    ids_i = np.empty(cap, dtype=np.int64)
    rem_e = np.empty(cap)
    arr_e = np.empty(cap)
    ids_e = np.empty(cap, dtype=np.int64)
    head_i = 0
    n_i = 0
    head_e = 0
    n_e = 0
    w_i = 0.0
    w_e = 0.0
    lam = lam_i + lam_e
    if lam <= 0.0:
        return out
    p_inel = lam_i / lam
    t = 0.0
    t_arr = np.random.exponential(1.0 / lam)
    t0 = 0.0
    area_ni = 0.0
    area_ne = 0.0
    area_wi = 0.0
    area_we = 0.0
    sum_ti = 0.0
    cnt_i = 0.0
    sum_te = 0.0
    cnt_e = 0.0
    warm = warm_events == 0
    ev = 0
    while ev < n_events:
        a_i, a_e = allocation(n_i, n_e, k, tab_i, tab_e, tab_def, rule)
        dt_c, who = _next_completion(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e)
        dt_a = t_arr - t
        completion = dt_c <= dt_a
        dt = dt_c if completion else dt_a
        r_i = _served_inelastic_rate(a_i, n_i)
        r_e = a_e if n_e > 0 else 0.0
        if warm:
            area_ni += n_i * dt
            area_ne += n_e * dt
            area_wi += w_i * dt - 0.5 * r_i * dt * dt
            area_we += w_e * dt - 0.5 * r_e * dt * dt
        _advance(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e, dt)
        w_i -= r_i * dt
        w_e -= r_e * dt
        t += dt
        if completion:
            if who >= 0:
                if warm:
                    sum_ti += t - arr_i[head_i + who]
                    cnt_i += 1.0
                head_i = _remove(rem_i, arr_i, ids_i, head_i, who)
                n_i -= 1
                if n_i == 0:
                    w_i = 0.0
            else:
                if warm:
                    sum_te += t - arr_e[head_e]
                    cnt_e += 1.0
                head_e += 1
                n_e -= 1
                if n_e == 0:
                    w_e = 0.0
        else:
            if np.random.random() < p_inel:
                s = np.random.exponential(1.0 / mu_i)
                rem_i, arr_i, ids_i, head_i = _push(rem_i, arr_i, ids_i, head_i, n_i, s, t, 0)
                n_i += 1
                w_i += s
            else:
                s = np.random.exponential(1.0 / mu_e)
                rem_e, arr_e, ids_e, head_e = _push(rem_e, arr_e, ids_e, head_e, n_e, s, t, 0)
                n_e += 1
                w_e += s
            t_arr = t + np.random.exponential(1.0 / lam)
            if n_i + n_e > guard:
                out[9] = 1.0
                break
        ev += 1
        if not warm and ev >= warm_events:
            warm = True
            t0 = t
    out[0] = t - t0
    out[1] = area_ni
    out[2] = area_ne
    out[3] = area_wi
    out[4] = area_we
    out[5] = sum_ti
    out[6] = cnt_i
    out[7] = sum_te
    out[8] = cnt_e
    out[10] = ev
    return out


@njit(cache=True)
def _work(rem, head, n):
    s = 0.0
    for q in range(head, head + n):
        s += rem[q]
    return s


@njit(cache=True)
def sample_path(times, elastic, sizes, horizon, k, tab_i, tab_e, tab_def, rule, max_events):
    """Deterministic fluid run on a fixed arrival sequence.

    Returns ``(checkpoints, completions, n_checkpoints)``; each checkpoint
    row is ``(time, W_I, W_E, N_I, N_E)``. Arrivals produce two rows with the
    same time (before and after the jump). Completions that tie with an
    arrival are processed first.
    """
    n_arr = times.shape[0]
    cp_cap = 2 * n_arr + 64
    cps = np.empty((cp_cap, 5))
    ncp = 0
    completions = np.full(n_arr, np.inf)
    cap = 64
    rem_i = np.empty(cap)
    arr_i = np.empty(cap)
    ids_i = np.empty(cap, dtype=np.int64)
    rem_e = np.empty(cap)
    arr_e = np.empty(cap)
    ids_e = np.empty(cap, dtype=np.int64)
    head_i = 0
    n_i = 0
    head_e = 0
    n_e = 0
    t = 0.0
    nxt = 0
    ev = 0
    cps[0, 0] = 0.0
    cps[0, 1] = 0.0
    cps[0, 2] = 0.0
    cps[0, 3] = 0.0
    cps[0, 4] = 0.0
    ncp = 1
    while ev < max_events:
        a_i, a_e = allocation(n_i, n_e, k, tab_i, tab_e, tab_def, rule)
        dt_c, who = _next_completion(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e)
        t_next_arr = times[nxt] if nxt < n_arr else np.inf
        t_c = t + dt_c
        t_stop = min(t_c, t_next_arr)
        if t_stop > horizon:
            _advance(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e, horizon - t)
            t = horizon
            break
        if t_stop == np.inf:
            break
        completion = t_c <= t_next_arr
        dt = dt_c if completion else t_next_arr - t
        _advance(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e, dt)
        t = t_c if completion else t_next_arr
        if completion:
            if who >= 0:
                rem_i[head_i + who] = 0.0
                completions[ids_i[head_i + who]] = t
                head_i = _remove(rem_i, arr_i, ids_i, head_i, who)
                n_i -= 1
            else:
                rem_e[head_e] = 0.0
                completions[ids_e[head_e]] = t
                head_e += 1
                n_e -= 1
        else:
            if ncp + 3 >= cps.shape[0]:
                grown = np.empty((2 * cps.shape[0], 5))
                grown[:ncp] = cps[:ncp]
                cps = grown
            cps[ncp, 0] = t
            cps[ncp, 1] = _work(rem_i, head_i, n_i)
            cps[ncp, 2] = _work(rem_e, head_e, n_e)
            cps[ncp, 3] = n_i
            cps[ncp, 4] = n_e
            ncp += 1
            s = sizes[nxt]
            if elastic[nxt]:
                rem_e, arr_e, ids_e, head_e = _push(rem_e, arr_e, ids_e, head_e, n_e, s, t, nxt)
                n_e += 1
            else:
                rem_i, arr_i, ids_i, head_i = _push(rem_i, arr_i, ids_i, head_i, n_i, s, t, nxt)
                n_i += 1
            nxt += 1
        if ncp + 3 >= cps.shape[0]:
            grown = np.empty((2 * cps.shape[0], 5))
            grown[:ncp] = cps[:ncp]
            cps = grown
        cps[ncp, 0] = t
        cps[ncp, 1] = _work(rem_i, head_i, n_i)
        cps[ncp, 2] = _work(rem_e, head_e, n_e)
        cps[ncp, 3] = n_i
        cps[ncp, 4] = n_e
        ncp += 1
        ev += 1
    if t > cps[ncp - 1, 0] or ncp == 1:
        cps[ncp, 0] = t
        cps[ncp, 1] = _work(rem_i, head_i, n_i)
        cps[ncp, 2] = _work(rem_e, head_e, n_e)
        cps[ncp, 3] = n_i
        cps[ncp, 4] = n_e
        ncp += 1
    return cps[:ncp], completions, ev


@njit(cache=True)
def transient_totals(n_inel, n_elas, mu_i, mu_e, k, tab_i, tab_e, tab_def, rule,
                     replications, seed):
    """Sum of response times of an initial batch of jobs, no further arrivals.

    Sizes are redrawn per replication. Returns one total per replication.
    """
    np.random.seed(seed)
    totals = np.empty(replications)
    cap = max(n_inel, n_elas) + 2
    rem_i = np.empty(cap)
    arr_i = np.zeros(cap)
    ids_i = np.zeros(cap, dtype=np.int64)
    rem_e = np.empty(cap)
    arr_e = np.zeros(cap)
    ids_e = np.zeros(cap, dtype=np.int64)
    for r in range(replications):
        for q in range(n_inel):
            rem_i[q] = np.random.exponential(1.0 / mu_i)
        for q in range(n_elas):
            rem_e[q] = np.random.exponential(1.0 / mu_e)
        head_i = 0
        n_i = n_inel
        head_e = 0
        n_e = n_elas
        t = 0.0
        total = 0.0
        while n_i + n_e > 0:
            a_i, a_e = allocation(n_i, n_e, k, tab_i, tab_e, tab_def, rule)
            dt, who = _next_completion(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e)
            if dt == np.inf:
                total = np.inf
                break
            _advance(rem_i, head_i, n_i, a_i, rem_e, head_e, n_e, a_e, dt)
            t += dt
            if who >= 0:
                head_i = _remove(rem_i, arr_i, ids_i, head_i, who)
                n_i -= 1
            else:
                head_e += 1
                n_e -= 1
            total += t
        totals[r] = total
    return totals

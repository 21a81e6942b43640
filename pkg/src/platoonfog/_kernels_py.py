"""Pure-python kernels: numpy Bellman sweeps and a per-event simulator loop.

Drop-in fallback for the compiled extension. The simulator consumes raw
uniform doubles from the supplied bit generator in exactly the same order and
with the same arithmetic as the compiled lane, so a fixed seed produces
bit-identical trajectories on either backend.
"""

from __future__ import annotations

import math

import numpy as np


def vi_solve(row_reward, row_state, row_occ, row_beta, state_ptr,
             occ_ptr, occ_rate, occ_state, y, gamma, threshold, max_sweeps):
    """Synchronous Bellman sweeps from v = 0; returns (values, residual trace)."""
    n_states = state_ptr.size - 1
    v = np.zeros(n_states)
    self_coef = gamma * (1.0 - row_beta / y)
    w_scale = gamma / y
    occ_starts = occ_ptr[:-1]
    row_starts = state_ptr[:-1]
    residuals = []
    for _ in range(int(max_sweeps)):
        w = np.add.reduceat(occ_rate * v[occ_state], occ_starts)
        q = row_reward + self_coef * v[row_state] + w_scale * w[row_occ]
        v_new = np.maximum.reduceat(q, row_starts)
        resid = float(np.max(np.abs(v_new - v)))
        residuals.append(resid)
        v = v_new
        if resid < threshold:
            break
    return v, np.asarray(residuals)


def simulate_events(bit_generator,
                    pol_ptr, pol_row, pol_cum,
                    row_occ, row_income, row_case, row_alloc, row_delay,
                    occ_ptr, occ_rate, occ_next_state, occ_total, occ_units,
                    start_state, alpha, horizon, max_events, warmup, n_alloc):
    """Run one replication of the event process; returns raw accumulators.

    Per epoch: pick the policy's action (one uniform when the distribution is
    non-degenerate), book the lump income discounted to the epoch time, draw
    the sojourn from the total post-action rate, integrate the occupancy cost
    over the sojourn in closed form, then draw which clock fired.
    """
    draw = np.random.Generator(bit_generator).random
    exp, log = math.exp, math.log

    t = 0.0
    t_end = 0.0
    s = int(start_state)
    reward = 0.0
    delay_sum = 0.0
    arrivals = offloads = vfc_offloads = events = 0
    case_counts = [0, 0, 0]
    alloc_counts = np.zeros(n_alloc, dtype=np.int64)

    while True:
        k0 = pol_ptr[s]
        k1 = pol_ptr[s + 1]
        if k1 - k0 == 1:
            r = pol_row[k0]
        else:
            u = draw()
            r = pol_row[k1 - 1]
            for k in range(k0, k1):
                if u < pol_cum[k]:
                    r = pol_row[k]
                    break
        df = exp(-alpha * t)
        reward += df * row_income[r]
        c = row_case[r]
        if c < 3 and t >= warmup:
            arrivals += 1
            case_counts[c] += 1
            if c <= 1:
                offloads += 1
                delay_sum += row_delay[r]
                if c == 1:
                    vfc_offloads += 1
                    alloc_counts[row_alloc[r] - 1] += 1
        o = row_occ[r]
        total = occ_total[o]
        tau = -log(1.0 - draw()) / total
        t_next = t + tau
        t_end = t_next if t_next < horizon else horizon
        reward -= occ_units[o] * (df - exp(-alpha * t_end)) / alpha
        events += 1
        if t_next >= horizon or events >= max_events:
            break
        u2 = draw() * total
        acc = 0.0
        hit = occ_ptr[o + 1] - 1
        for k in range(occ_ptr[o], occ_ptr[o + 1]):
            acc += occ_rate[k]
            if u2 < acc:
                hit = k
                break
        s = int(occ_next_state[hit])
        t = t_next

    return (arrivals, case_counts[0], case_counts[1], case_counts[2],
            alloc_counts, delay_sum, offloads, vfc_offloads, reward, events,
            t_end, s)

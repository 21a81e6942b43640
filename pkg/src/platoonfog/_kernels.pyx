# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Bellman sweeps and the per-event simulator.

Mirrors _kernels_py line for line. The simulator pulls raw uniform doubles
straight from the numpy bit generator's C interface, in the same order and
with the same arithmetic as the pure-python lane, so both backends produce
bit-identical trajectories for the same seed.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, fabs, log
from numpy.random cimport bitgen_t

cnp.import_array()


def vi_solve(double[::1] row_reward,
             cnp.int64_t[::1] row_state,
             cnp.int64_t[::1] row_occ,
             double[::1] row_beta,
             cnp.int64_t[::1] state_ptr,
             cnp.int64_t[::1] occ_ptr,
             double[::1] occ_rate,
             cnp.int64_t[::1] occ_state,
             double y, double gamma, double threshold, long max_sweeps):
    """Synchronous Bellman sweeps from v = 0; returns (values, residual trace)."""
    cdef Py_ssize_t n_states = state_ptr.shape[0] - 1
    cdef Py_ssize_t n_occ = occ_ptr.shape[0] - 1
    cdef Py_ssize_t n_rows = row_reward.shape[0]

    v_arr = np.zeros(n_states)
    v_new_arr = np.empty(n_states)
    w_arr = np.empty(n_occ)
    coef_arr = np.empty(n_rows)
    cdef double[::1] v = v_arr
    cdef double[::1] v_new = v_new_arr
    cdef double[::1] w = w_arr
    cdef double[::1] coef = coef_arr
    cdef double w_scale = gamma / y

    cdef Py_ssize_t r, s, o, k, sweep
    for r in range(n_rows):
        coef[r] = gamma * (1.0 - row_beta[r] / y)

    residuals = []
    cdef double acc, best, q, diff, resid
    cdef double[::1] tmp
    for sweep in range(max_sweeps):
        with nogil:
            for o in range(n_occ):
                acc = 0.0
                for k in range(occ_ptr[o], occ_ptr[o + 1]):
                    acc += occ_rate[k] * v[occ_state[k]]
                w[o] = acc
            resid = 0.0
            for s in range(n_states):
                best = -1e308
                for r in range(state_ptr[s], state_ptr[s + 1]):
                    q = row_reward[r] + coef[r] * v[s] + w_scale * w[row_occ[r]]
                    if q > best:
                        best = q
                v_new[s] = best
                diff = fabs(best - v[s])
                if diff > resid:
                    resid = diff
        tmp = v
        v = v_new
        v_new = tmp
        residuals.append(resid)
        if resid < threshold:
            break

    return np.asarray(v).copy(), np.asarray(residuals)


def simulate_events(bit_generator,
                    cnp.int64_t[::1] pol_ptr,
                    cnp.int64_t[::1] pol_row,
                    double[::1] pol_cum,
                    cnp.int64_t[::1] row_occ,
                    double[::1] row_income,
                    cnp.int64_t[::1] row_case,
                    cnp.int64_t[::1] row_alloc,
                    double[::1] row_delay,
                    cnp.int64_t[::1] occ_ptr,
                    double[::1] occ_rate,
                    cnp.int64_t[::1] occ_next_state,
                    double[::1] occ_total,
                    double[::1] occ_units,
                    long start_state, double alpha, double horizon,
                    long max_events, double warmup, long n_alloc):
    """Run one replication of the event process; returns raw accumulators."""
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")

    cdef double t = 0.0
    cdef double t_end = 0.0
    cdef Py_ssize_t s = start_state
    cdef double reward = 0.0
    cdef double delay_sum = 0.0
    cdef long arrivals = 0, offloads = 0, vfc_offloads = 0, events = 0
    cdef long case0 = 0, case1 = 0, case2 = 0
    alloc_arr = np.zeros(n_alloc, dtype=np.int64)
    cdef cnp.int64_t[::1] alloc_counts = alloc_arr

    cdef Py_ssize_t k0, k1, r, k, o, hit
    cdef long c
    cdef double u, u2, df, total, tau, t_next, acc

    while True:
        k0 = pol_ptr[s]
        k1 = pol_ptr[s + 1]
        if k1 - k0 == 1:
            r = pol_row[k0]
        else:
            u = rng.next_double(rng.state)
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
            if c == 0:
                case0 += 1
            elif c == 1:
                case1 += 1
            else:
                case2 += 1
            if c <= 1:
                offloads += 1
                delay_sum += row_delay[r]
                if c == 1:
                    vfc_offloads += 1
                    alloc_counts[row_alloc[r] - 1] += 1
        o = row_occ[r]
        total = occ_total[o]
        tau = -log(1.0 - rng.next_double(rng.state)) / total
        t_next = t + tau
        t_end = t_next if t_next < horizon else horizon
        reward -= occ_units[o] * (df - exp(-alpha * t_end)) / alpha
        events += 1
        if t_next >= horizon or events >= max_events:
            break
        u2 = rng.next_double(rng.state) * total
        acc = 0.0
        hit = occ_ptr[o + 1] - 1
        for k in range(occ_ptr[o], occ_ptr[o + 1]):
            acc += occ_rate[k]
            if u2 < acc:
                hit = k
                break
        s = occ_next_state[hit]
        t = t_next

    return (arrivals, case0, case1, case2,
            alloc_arr, delay_sum, offloads, vfc_offloads, reward, events,
            t_end, s)

"""Continuous-time Monte-Carlo replay of a stationary policy.

The simulator races exponential clocks on the current occupancy: pooled task
arrivals, one completion clock per busy platoon vehicle, one release clock
per held resource-unit class, and fleet arrival/departure clocks with the
same boundary rules as the analytic model. At every arrival it draws the
policy's action, records the decision class (0 platoon, 1 fog pool,
2 discard) and the analytic offloading delay, and accumulates the discounted
reward with the occupancy cost integrated in closed form per sojourn.

Rates and incomes here are built by this module's own bookkeeping rather than
taken from the solver's model; the test suite cross-checks the two paths
against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import SystemConfig
from .model import OffloadDelays
from .states import (
    Codes,
    State,
    StateIndex,
    apply_dynamics,
    enumerate_states,
    feasible_actions,
    fleet_loss_interrupts,
    reference_state,
    ru_in_use,
)

#: decision classes recorded at arrivals
CASE_PLATOON, CASE_VFC, CASE_DISCARD, CASE_NONE = 0, 1, 2, 3

_CI_KEYS = ("p_case0", "p_case1", "p_case2", "mean_offload_delay", "discounted_reward")


@dataclass(frozen=True)
class SimConfig:
    """Replication layout: stop at the horizon or the event cap, whichever
    comes first. ``warmup`` only gates the decision statistics; the
    discounted reward always starts at t = 0."""

    horizon_seconds: float | None = None
    max_events: int = 1_000_000
    replications: int = 1
    seed: int = 0
    warmup: float = 0.0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.horizon_seconds is not None and self.horizon_seconds <= self.warmup:
            raise ValueError("horizon_seconds must exceed warmup")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")


@dataclass
class SimStats:
    """Decision statistics of one replication or of an aggregate."""

    p_case0: float
    p_case1: float
    p_case2: float
    p_alloc: tuple               # share of fog offloads using 1..n_r units; nan if none
    mean_offload_delay: float    # seconds; nan when nothing was offloaded
    discounted_reward: float
    arrivals_observed: int
    offloads_observed: int
    vfc_offloads_observed: int
    events_observed: int
    elapsed_seconds: float = 0.0
    final_state: int = -1        # state index at the stop point (single replication)
    ci_halfwidths: dict = field(default_factory=dict)


class SimTables:
    """Flat arrays driving the event kernel for one (config, index, policy)."""

    def __init__(self, cfg: SystemConfig, index: StateIndex, policy,
                 delays: OffloadDelays | None = None):
        self.cfg = cfg
        self.index = index
        codes = index.codes
        if delays is None:
            delays = OffloadDelays(cfg)
        self.delays = delays

        occ_pos = {}
        occs = []
        for s in index.states:
            occ = s.occupancy
            if occ not in occ_pos:
                occ_pos[occ] = len(occs)
                occs.append(occ)

        occ_ptr = [0]
        occ_rate, occ_next = [], []
        occ_total = np.empty(len(occs))
        occ_units = np.empty(len(occs))
        for k, occ in enumerate(occs):
            total = 0.0
            for e, rate in _clock_rates(cfg, occ):
                occ_rate.append(rate)
                occ_next.append(index.position(State(occ.n, occ.b, occ.m, e)))
                total += rate
            occ_ptr.append(len(occ_rate))
            occ_total[k] = total
            occ_units[k] = sum(occ.n) + ru_in_use(occ)
        self.occ_ptr = np.asarray(occ_ptr, dtype=np.int64)
        self.occ_rate = np.asarray(occ_rate)
        self.occ_next_state = np.asarray(occ_next, dtype=np.int64)
        self.occ_total = occ_total
        self.occ_units = occ_units

        row_of = {}
        row_occ, row_income, row_case, row_alloc, row_delay = [], [], [], [], []
        for si, s in enumerate(index.states):
            for a in feasible_actions(cfg, s):
                occ = apply_dynamics(cfg, s, a)
                row_of[(si, a)] = len(row_occ)
                row_occ.append(occ_pos[occ])
                row_income.append(_action_income(cfg, s, a, delays, codes))
                case, alloc, delay = _decision_record(cfg, s, a, delays, codes)
                row_case.append(case)
                row_alloc.append(alloc)
                row_delay.append(delay)
        self.row_occ = np.asarray(row_occ, dtype=np.int64)
        self.row_income = np.asarray(row_income)
        self.row_case = np.asarray(row_case, dtype=np.int64)
        self.row_alloc = np.asarray(row_alloc, dtype=np.int64)
        self.row_delay = np.asarray(row_delay)

        pol_ptr = [0]
        pol_row, pol_cum = [], []
        for si in range(len(index)):
            actions, probs = policy.support(si)
            acc = 0.0
            for a, p in zip(actions, probs):
                if p == 0.0:
                    continue
                acc += p
                pol_row.append(row_of[(si, int(a))])
                pol_cum.append(acc)
            pol_ptr.append(len(pol_row))
        self.pol_ptr = np.asarray(pol_ptr, dtype=np.int64)
        self.pol_row = np.asarray(pol_row, dtype=np.int64)
        self.pol_cum = np.asarray(pol_cum)


def _clock_rates(cfg: SystemConfig, occ):
    """The simulator's own competing-clock rates for an occupancy."""
    codes = Codes(cfg)
    rates = [(Codes.ARRIVAL, cfg.n_platoon * cfg.lambda_p)]
    for i, busy in enumerate(occ.n, start=1):
        if busy:
            rates.append((codes.departure(i), cfg.f_platoon[i - 1] / cfg.d))
    for j, count in enumerate(occ.b, start=1):
        if count > 0:
            rates.append((codes.release(j), j * count * cfg.f_ru / cfg.d))
    if occ.m < cfg.k_max:
        rates.append((codes.fleet_gain, cfg.lambda_v))
    if occ.m > 0:
        rates.append((codes.fleet_loss, cfg.mu_v))
    return rates


def _action_income(cfg, s, a, delays, codes):
    if s.event == Codes.ARRIVAL:
        if a == Codes.DISCARD:
            return -cfg.zeta
        if codes.is_platoon(a):
            return cfg.eta * (cfg.e_l - delays.platoon_delay(a))
        return cfg.eta * (cfg.e_l - delays.vfc_delay(s.m, codes.vfc_units(a)))
    if fleet_loss_interrupts(s, codes):
        return -cfg.zeta
    return 0.0


def _decision_record(cfg, s, a, delays, codes):
    """(case, allocated units, analytic delay) recorded for an action."""
    if s.event != Codes.ARRIVAL:
        return CASE_NONE, 0, float("nan")
    if a == Codes.DISCARD:
        return CASE_DISCARD, 0, float("nan")
    if codes.is_platoon(a):
        return CASE_PLATOON, 0, delays.platoon_delay(a)
    j = codes.vfc_units(a)
    return CASE_VFC, j, delays.vfc_delay(s.m, j)


def _stats_from_raw(cfg, raw) -> SimStats:
    (arrivals, c0, c1, c2, alloc_counts, delay_sum, offloads,
     vfc_offloads, reward, events, elapsed, final_state) = raw
    nan = float("nan")
    if arrivals > 0:
        p0, p1, p2 = c0 / arrivals, c1 / arrivals, c2 / arrivals
    else:
        p0 = p1 = p2 = nan
    if vfc_offloads > 0:
        p_alloc = tuple(c / vfc_offloads for c in alloc_counts)
    else:
        p_alloc = (nan,) * cfg.n_r
    delay = delay_sum / offloads if offloads > 0 else nan
    hw = {key: 0.0 for key in _CI_KEYS}
    hw.update({f"p_a{j}": 0.0 for j in range(1, cfg.n_r + 1)})
    return SimStats(
        p_case0=p0, p_case1=p1, p_case2=p2, p_alloc=p_alloc,
        mean_offload_delay=delay, discounted_reward=reward,
        arrivals_observed=int(arrivals), offloads_observed=int(offloads),
        vfc_offloads_observed=int(vfc_offloads), events_observed=int(events),
        elapsed_seconds=float(elapsed), final_state=int(final_state),
        ci_halfwidths=hw,
    )


def _as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, tuple):
        return np.random.SeedSequence(seed)
    return np.random.SeedSequence(int(seed))


def run_replication(cfg: SystemConfig, policy, sim: SimConfig, seed,
                    *, index: StateIndex | None = None,
                    tables: SimTables | None = None,
                    start: State | None = None) -> SimStats:
    """One seeded replication; bit-identical results for identical seeds."""
    if tables is None:
        if index is None:
            index = enumerate_states(cfg)
        tables = SimTables(cfg, index, policy)
    index = tables.index
    start_idx = index.position(reference_state(cfg) if start is None else start)
    horizon = float("inf") if sim.horizon_seconds is None else sim.horizon_seconds
    bitgen = np.random.PCG64(_as_seed_sequence(seed))
    raw = kernels.simulate_events(
        bitgen,
        tables.pol_ptr, tables.pol_row, tables.pol_cum,
        tables.row_occ, tables.row_income, tables.row_case,
        tables.row_alloc, tables.row_delay,
        tables.occ_ptr, tables.occ_rate, tables.occ_next_state,
        tables.occ_total, tables.occ_units,
        start_idx, cfg.alpha, horizon, sim.max_events, sim.warmup, cfg.n_r)
    return _stats_from_raw(cfg, raw)


def simulate_policy(cfg: SystemConfig, policy, sim: SimConfig,
                    *, index: StateIndex | None = None,
                    delays: OffloadDelays | None = None,
                    start: State | None = None,
                    stream: int = 0) -> SimStats:
    """Run ``sim.replications`` independent replications and aggregate them.

    Replication r draws its stream from the seed triple
    (sim.seed, stream, r), so parallel sweeps stay reproducible.
    """
    if index is None:
        index = enumerate_states(cfg)
    tables = SimTables(cfg, index, policy, delays)
    stats = [
        run_replication(cfg, policy, sim, (sim.seed, stream, r), tables=tables,
                        start=start)
        for r in range(sim.replications)
    ]
    return aggregate(stats)


def _mean_hw(values) -> tuple:
    """Mean and 95% normal-approximation half-width across replications."""
    arr = np.asarray([v for v in values if not np.isnan(v)])
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))


def aggregate(stats) -> SimStats:
    """Combine replications: plain means for probabilities and reward, offload
    weighted means for the delay and the allocation shares."""
    stats = list(stats)
    if not stats:
        raise ValueError("aggregate needs at least one replication")
    if len(stats) == 1:
        return stats[0]
    n_r = len(stats[0].p_alloc)
    hw = {}
    p0, hw["p_case0"] = _mean_hw(s.p_case0 for s in stats)
    p1, hw["p_case1"] = _mean_hw(s.p_case1 for s in stats)
    p2, hw["p_case2"] = _mean_hw(s.p_case2 for s in stats)
    reward, hw["discounted_reward"] = _mean_hw(s.discounted_reward for s in stats)
    _, hw["mean_offload_delay"] = _mean_hw(s.mean_offload_delay for s in stats)

    offloads = sum(s.offloads_observed for s in stats)
    delay_total = sum(
        s.mean_offload_delay * s.offloads_observed
        for s in stats if s.offloads_observed > 0)
    delay = delay_total / offloads if offloads > 0 else float("nan")

    vfc = sum(s.vfc_offloads_observed for s in stats)
    alloc = []
    for j in range(n_r):
        counts = sum(
            s.p_alloc[j] * s.vfc_offloads_observed
            for s in stats if s.vfc_offloads_observed > 0)
        alloc.append(counts / vfc if vfc > 0 else float("nan"))
        _, hw[f"p_a{j + 1}"] = _mean_hw(s.p_alloc[j] for s in stats)

    return SimStats(
        p_case0=p0, p_case1=p1, p_case2=p2, p_alloc=tuple(alloc),
        mean_offload_delay=delay, discounted_reward=reward,
        arrivals_observed=sum(s.arrivals_observed for s in stats),
        offloads_observed=offloads,
        vfc_offloads_observed=vfc,
        events_observed=sum(s.events_observed for s in stats),
        elapsed_seconds=sum(s.elapsed_seconds for s in stats),
        ci_halfwidths=hw,
    )

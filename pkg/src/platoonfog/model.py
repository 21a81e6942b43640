"""Rewards, event rates, transition rows, and the uniformized discrete-time model.

Every (state, action) pair first applies its deterministic occupancy update;
rates, the occupancy cost, and the successor distribution are all evaluated on
that post-action occupancy, so the lump income and the sojourn they price
describe the same interval. Uniformization with a shared normalization factor
``y`` turns the continuous-time model into an equivalent discounted
discrete-time one with factor ``gamma = y / (alpha + y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .dcf import transmit_delay
from .states import (
    Codes,
    Occupancy,
    State,
    StateIndex,
    apply_dynamics,
    enumerate_states,
    feasible_actions,
    fleet_loss_interrupts,
    ru_in_use,
)


@dataclass(frozen=True)
class RewardTerms:
    """Reward decomposition for one (state, action) pair."""

    income: float      # lump value collected when the action is taken
    cost: float        # expected discounted occupancy cost over the sojourn
    reward: float      # income - cost
    cost_rate: int     # occupied units after the action
    beta: float        # total event rate out of the post-action occupancy


class OffloadDelays:
    """Analytic transmit and processing delays shared by rewards and the simulator.

    ``platoon_delay(i)`` is the one-hop transmit delay plus vehicle i's
    processing time. ``vfc_delay(m, j)`` adds the relay hop toward j resource
    units while m fog vehicles contend for the channel.
    """

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.t_p = transmit_delay(cfg.dcf, cfg.n_platoon, 1)
        self.t_vf = {
            (m, j): transmit_delay(cfg.dcf, m + 1, j)
            for m in range(1, cfg.k_max + 1)
            for j in range(1, cfg.n_r + 1)
        }
        self.proc_platoon = tuple(cfg.d / f for f in cfg.f_platoon)
        self.proc_vfc = tuple(cfg.d / (j * cfg.f_ru) for j in range(1, cfg.n_r + 1))

    def platoon_delay(self, i: int) -> float:
        return self.t_p + self.proc_platoon[i - 1]

    def vfc_delay(self, m: int, j: int) -> float:
        return self.t_p + self.t_vf[(m, j)] + self.proc_vfc[j - 1]


def occupancy_rates(cfg: SystemConfig, occ: Occupancy) -> list:
    """(event code, rate) pairs of the competing clocks out of an occupancy.

    Fleet arrivals are disabled at m = k_max and fleet departures at m = 0,
    which keeps every transition row stochastic.
    """
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


def income(cfg: SystemConfig, s: State, action: int, delays: OffloadDelays) -> float:
    """Lump income of taking an action: saved delay, zero, or a loss penalty."""
    codes = Codes(cfg)
    if s.event == Codes.ARRIVAL:
        if action == Codes.DISCARD:
            return -cfg.zeta
        if codes.is_platoon(action):
            return cfg.eta * (cfg.e_l - delays.platoon_delay(action))
        j = codes.vfc_units(action)
        return cfg.eta * (cfg.e_l - delays.vfc_delay(s.m, j))
    if fleet_loss_interrupts(s, codes):
        return -cfg.zeta
    return 0.0


def beta(cfg: SystemConfig, s: State, action: int) -> float:
    """Total event rate out of the post-action occupancy."""
    occ = apply_dynamics(cfg, s, action)
    return sum(rate for _, rate in occupancy_rates(cfg, occ))


def cost(cfg: SystemConfig, s: State, action: int) -> float:
    """Expected discounted occupancy cost accrued until the next event."""
    occ = apply_dynamics(cfg, s, action)
    units = sum(occ.n) + ru_in_use(occ)
    total_rate = sum(rate for _, rate in occupancy_rates(cfg, occ))
    return units / (cfg.alpha + total_rate)


def reward(cfg: SystemConfig, s: State, action: int, delays: OffloadDelays) -> RewardTerms:
    occ = apply_dynamics(cfg, s, action)
    units = sum(occ.n) + ru_in_use(occ)
    total_rate = sum(rate for _, rate in occupancy_rates(cfg, occ))
    u = income(cfg, s, action, delays)
    g = units / (cfg.alpha + total_rate)
    return RewardTerms(income=u, cost=g, reward=u - g, cost_rate=units, beta=total_rate)


def transitions(cfg: SystemConfig, index: StateIndex, s: State, action: int) -> dict:
    """Sparse successor distribution of (state, action): state index -> probability."""
    occ = apply_dynamics(cfg, s, action)
    rates = occupancy_rates(cfg, occ)
    total = sum(rate for _, rate in rates)
    return {
        index.position(State(occ.n, occ.b, occ.m, e)): rate / total
        for e, rate in rates
    }


def normalization_factor(cfg: SystemConfig) -> float:
    """Uniformization rate: an upper bound on every beta(s, a).

    Adds the full-platoon completion rate and k_max * n_r capped release
    rates on top of the arrival terms, so the bound holds with slack for
    every reachable occupancy.
    """
    return (
        cfg.n_platoon * cfg.lambda_p
        + cfg.lambda_v
        + cfg.mu_v
        + sum(cfg.f_platoon) / cfg.d
        + cfg.k_max * cfg.n_r * cfg.f_ru / cfg.d
    )


class UniformizedModel:
    """Discrete-time equivalent of the continuous-time decision process.

    Rows are (state, action) pairs grouped by state. The successor structure
    is factored through post-action occupancies: row r leads to occupancy
    ``row_occ[r]``, whose outgoing events are stored once in the occupancy
    tables. The dense uniformized row of r places ``1 - beta/y`` on the
    diagonal plus ``rate/y`` per outgoing event.
    """

    def __init__(self, cfg: SystemConfig, index: StateIndex, delays: OffloadDelays):
        self.cfg = cfg
        self.index = index
        self.delays = delays
        self.y = normalization_factor(cfg)
        self.gamma = self.y / (cfg.alpha + self.y)

        occs = []
        occ_pos = {}
        for s in index.states:
            occ = s.occupancy
            if occ not in occ_pos:
                occ_pos[occ] = len(occs)
                occs.append(occ)
        self.occupancies = occs

        ptr = [0]
        ev_code, ev_rate, ev_state = [], [], []
        occ_beta = np.empty(len(occs))
        occ_units = np.empty(len(occs), dtype=np.int64)
        for k, occ in enumerate(occs):
            rates = occupancy_rates(cfg, occ)
            for e, rate in rates:
                ev_code.append(e)
                ev_rate.append(rate)
                ev_state.append(index.position(State(occ.n, occ.b, occ.m, e)))
            ptr.append(len(ev_code))
            occ_beta[k] = sum(rate for _, rate in rates)
            occ_units[k] = sum(occ.n) + ru_in_use(occ)
        self.occ_ptr = np.asarray(ptr, dtype=np.int64)
        self.occ_event_code = np.asarray(ev_code, dtype=np.int64)
        self.occ_event_rate = np.asarray(ev_rate)
        self.occ_event_state = np.asarray(ev_state, dtype=np.int64)
        self.occ_beta = occ_beta
        self.occ_units = occ_units

        state_ptr = [0]
        row_state, row_action, row_occ = [], [], []
        row_income = []
        alpha = cfg.alpha
        for si, s in enumerate(index.states):
            for a in feasible_actions(cfg, s):
                occ = apply_dynamics(cfg, s, a)
                row_state.append(si)
                row_action.append(a)
                row_occ.append(occ_pos[occ])
                row_income.append(income(cfg, s, a, delays))
            state_ptr.append(len(row_state))
        self.state_ptr = np.asarray(state_ptr, dtype=np.int64)
        self.row_state = np.asarray(row_state, dtype=np.int64)
        self.row_action = np.asarray(row_action, dtype=np.int64)
        self.row_occ = np.asarray(row_occ, dtype=np.int64)
        self.row_income = np.asarray(row_income)
        self.row_beta = self.occ_beta[self.row_occ]
        self.row_cost_rate = self.occ_units[self.row_occ]
        self.row_cost = self.row_cost_rate / (alpha + self.row_beta)
        self.row_reward_raw = self.row_income - self.row_cost
        # reward rescaling of the uniformized process
        self.row_reward = self.row_reward_raw * (alpha + self.row_beta) / (alpha + self.y)

        if np.any(self.occ_beta > self.y):
            raise AssertionError("normalization factor is below an event rate")

    @property
    def n_states(self) -> int:
        return len(self.index)

    @property
    def n_rows(self) -> int:
        return self.row_state.size

    def rows_of(self, state_idx: int) -> range:
        return range(self.state_ptr[state_idx], self.state_ptr[state_idx + 1])

    def row_for(self, state_idx: int, action: int) -> int:
        for r in self.rows_of(state_idx):
            if self.row_action[r] == action:
                return r
        raise KeyError(f"action {action} not feasible in state index {state_idx}")

    def raw_row(self, r: int) -> dict:
        """Successor distribution of row r before uniformization."""
        occ = self.row_occ[r]
        total = self.occ_beta[occ]
        out = {}
        for k in range(self.occ_ptr[occ], self.occ_ptr[occ + 1]):
            out[int(self.occ_event_state[k])] = self.occ_event_rate[k] / total
        return out

    def uniformized_row(self, r: int) -> dict:
        """Successor distribution of row r in the uniformized chain."""
        s = int(self.row_state[r])
        occ = self.row_occ[r]
        out = {s: 1.0 - self.occ_beta[occ] / self.y}
        for k in range(self.occ_ptr[occ], self.occ_ptr[occ + 1]):
            dst = int(self.occ_event_state[k])
            out[dst] = out.get(dst, 0.0) + self.occ_event_rate[k] / self.y
        return out

    def dump(self, path):
        """Line-delimited model dump, byte-stable under a fixed config."""
        index = self.index
        codes = index.codes
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# platoonfog model dump v1\n")
            fh.write("# state\taction\tbeta\tincome\tcost\treward\tsuccessors(idx:prob)\n")
            for r in range(self.n_rows):
                s = index[int(self.row_state[r])]
                succ = ",".join(
                    f"{dst}:{p:.17g}" for dst, p in sorted(self.raw_row(r).items())
                )
                fh.write(
                    f"{index.state_label(s)}\t{codes.action_label(int(self.row_action[r]))}"
                    f"\t{self.row_beta[r]:.17g}\t{self.row_income[r]:.17g}"
                    f"\t{self.row_cost[r]:.17g}\t{self.row_reward_raw[r]:.17g}\t{succ}\n"
                )


def build_model(cfg: SystemConfig, index: StateIndex | None = None,
                delays: OffloadDelays | None = None) -> UniformizedModel:
    """Enumerate states and assemble the uniformized model for a config."""
    if index is None:
        index = enumerate_states(cfg)
    if delays is None:
        delays = OffloadDelays(cfg)
    return UniformizedModel(cfg, index, delays)

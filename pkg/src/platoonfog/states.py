"""State space, event/action encodings, and deterministic post-transition dynamics.

A state is the occupancy of the platoon (one busy bit per vehicle), the fog
pool (count of tasks holding j resource units, for j = 1..n_r), the current
fog fleet size m, and the pending event. Events and actions are small integer
codes; their numeric order fixes both the enumeration order and the action
tie-break used by the solver.
"""

from __future__ import annotations

import itertools
from typing import NamedTuple

from .config import SystemConfig


class InfeasibleActionError(ValueError):
    """An action outside feasible_actions() was applied to a state."""


class Occupancy(NamedTuple):
    n: tuple            # busy bit per platoon vehicle
    b: tuple            # b[j-1] tasks hold j resource units each
    m: int              # current fog fleet size


class State(NamedTuple):
    n: tuple
    b: tuple
    m: int
    event: int

    @property
    def occupancy(self) -> Occupancy:
        return Occupancy(self.n, self.b, self.m)


class Codes:
    """Integer encodings for events and actions of one system shape.

    Events: 0 = task arrival, i = departure from platoon vehicle i (1..N),
    N+j = release of a j-RU task (1..n_r), then fleet gain, then fleet loss.
    Actions: 0 = discard, i = place on platoon vehicle i, N+j = offload to
    j resource units, and the largest code is no-op. Ascending action code is
    the deterministic tie-break order.
    """

    ARRIVAL = 0
    DISCARD = 0

    def __init__(self, cfg: SystemConfig):
        self.n = cfg.n_platoon
        self.n_r = cfg.n_r
        self.fleet_gain = self.n + self.n_r + 1
        self.fleet_loss = self.n + self.n_r + 2
        self.noop = self.n + self.n_r + 1

    # -- events ---------------------------------------------------------
    def departure(self, i: int) -> int:
        return i

    def release(self, j: int) -> int:
        return self.n + j

    def is_departure(self, event: int) -> bool:
        return 1 <= event <= self.n

    def is_release(self, event: int) -> bool:
        return self.n < event <= self.n + self.n_r

    def event_label(self, event: int) -> str:
        if event == self.ARRIVAL:
            return "A"
        if self.is_departure(event):
            return f"D{event}"
        if self.is_release(event):
            return f"L{event - self.n}"
        if event == self.fleet_gain:
            return "F+1"
        if event == self.fleet_loss:
            return "F-1"
        raise ValueError(f"bad event code {event}")

    # -- actions --------------------------------------------------------
    def platoon(self, i: int) -> int:
        return i

    def vfc(self, j: int) -> int:
        return self.n + j

    def is_platoon(self, action: int) -> bool:
        return 1 <= action <= self.n

    def is_vfc(self, action: int) -> bool:
        return self.n < action <= self.n + self.n_r

    def vfc_units(self, action: int) -> int:
        return action - self.n

    def action_label(self, action: int) -> str:
        if action == self.DISCARD:
            return "discard"
        if self.is_platoon(action):
            return f"platoon:{action}"
        if self.is_vfc(action):
            return f"vfc:{action - self.n}"
        if action == self.noop:
            return "noop"
        raise ValueError(f"bad action code {action}")


def ru_in_use(occ) -> int:
    """Resource units currently held, sum of j * b[j]."""
    return sum(j * c for j, c in enumerate(occ.b, start=1))


def reference_state(cfg: SystemConfig) -> State:
    """Empty system at full fleet with a task arrival pending."""
    return State((0,) * cfg.n_platoon, (0,) * cfg.n_r, cfg.k_max, Codes.ARRIVAL)


def iter_occupancies(cfg: SystemConfig):
    """All feasible occupancies in lexicographic (n, b, m) order."""
    k = cfg.k_max
    b_ranges = [range(k // j + 1) for j in range(1, cfg.n_r + 1)]
    for n in itertools.product((0, 1), repeat=cfg.n_platoon):
        for b in itertools.product(*b_ranges):
            used = sum(j * c for j, c in enumerate(b, start=1))
            if used > k:
                continue
            for m in range(used, k + 1):
                yield Occupancy(n, b, m)


def events_of(cfg: SystemConfig, occ) -> list:
    """Event codes consistent with an occupancy, ascending."""
    codes = Codes(cfg)
    events = [Codes.ARRIVAL]
    events += [codes.departure(i) for i, busy in enumerate(occ.n, start=1) if busy]
    events += [codes.release(j) for j, c in enumerate(occ.b, start=1) if c > 0]
    if occ.m < cfg.k_max:
        events.append(codes.fleet_gain)
    if occ.m > 0:
        events.append(codes.fleet_loss)
    return events


class StateIndex:
    """Bijection between feasible states and dense indices 0..len-1.

    Ordering is lexicographic over (n, b, m, event code), so the layout is
    reproducible for policy dumps and regression diffs.
    """

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.codes = Codes(cfg)
        self.states: list[State] = [
            State(occ.n, occ.b, occ.m, e)
            for occ in iter_occupancies(cfg)
            for e in events_of(cfg, occ)
        ]
        self._position = {s: i for i, s in enumerate(self.states)}

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i: int) -> State:
        return self.states[i]

    def position(self, state: State) -> int:
        return self._position[state]

    def __contains__(self, state: State) -> bool:
        return state in self._position

    def state_label(self, state: State) -> str:
        n = ",".join(map(str, state.n))
        b = ",".join(map(str, state.b))
        return f"{n}|{b}|{state.m}|{self.codes.event_label(state.event)}"


def enumerate_states(cfg: SystemConfig) -> StateIndex:
    return StateIndex(cfg)


def feasible_actions(cfg: SystemConfig, s: State) -> list:
    """Actions allowed in a state, ascending by code (the tie-break order).

    Arrivals may be discarded, placed on any idle platoon vehicle, or
    offloaded to j resource units when j of them are free. Every other event
    admits only the no-op.
    """
    codes = Codes(cfg)
    if s.event != Codes.ARRIVAL:
        return [codes.noop]
    actions = [Codes.DISCARD]
    actions += [codes.platoon(i) for i, busy in enumerate(s.n, start=1) if not busy]
    free = s.m - ru_in_use(s)
    actions += [codes.vfc(j) for j in range(1, cfg.n_r + 1) if j <= free]
    return actions


def apply_dynamics(cfg: SystemConfig, s: State, action: int) -> Occupancy:
    """Deterministic occupancy update for (state, action), before the next event.

    A fleet loss while every resource unit is held interrupts one task from
    the largest occupied unit class to keep the occupancy feasible; the lost
    task is charged by the reward model.
    """
    if action not in feasible_actions(cfg, s):
        raise InfeasibleActionError(
            f"action {action} not feasible in state {s}"
        )
    codes = Codes(cfg)
    n, b, m = list(s.n), list(s.b), s.m
    e = s.event
    if e == Codes.ARRIVAL:
        if codes.is_platoon(action):
            n[action - 1] = 1
        elif codes.is_vfc(action):
            b[codes.vfc_units(action) - 1] += 1
    elif codes.is_departure(e):
        n[e - 1] = 0
    elif codes.is_release(e):
        b[e - codes.n - 1] -= 1
    elif e == codes.fleet_gain:
        m += 1
    elif e == codes.fleet_loss:
        if ru_in_use(s) == m:
            j = max(jj for jj, c in enumerate(b, start=1) if c > 0)
            b[j - 1] -= 1
        m -= 1
    return Occupancy(tuple(n), tuple(b), m)


def fleet_loss_interrupts(s: State, codes: Codes) -> bool:
    """True when a pending fleet loss will interrupt a running task."""
    return s.event == codes.fleet_loss and ru_in_use(s) == s.m

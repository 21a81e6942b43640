import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonfog import default_config
from platoonfog.states import (
    Codes,
    InfeasibleActionError,
    State,
    apply_dynamics,
    enumerate_states,
    feasible_actions,
    reference_state,
    ru_in_use,
)

# ---------------------------------------------------------------------------
# independent counting oracle
# ---------------------------------------------------------------------------


def count_states_oracle(cfg):
    """Count feasible states by brute enumeration, independent of StateIndex."""
    total = 0
    k = cfg.k_max
    for b in itertools.product(*[range(k // j + 1) for j in range(1, cfg.n_r + 1)]):
        used = sum(j * c for j, c in enumerate(b, start=1))
        if used > k:
            continue
        for m in range(used, k + 1):
            classes = sum(1 for c in b if c > 0)
            for n in itertools.product((0, 1), repeat=cfg.n_platoon):
                total += 1 + sum(n) + classes + (m < k) + (m > 0)
    return total


def test_tiny_count_matches_oracle(tiny):
    index = enumerate_states(tiny)
    # hand enumeration: 2 occupancy rows with 2 events, 1 with 3 for n=0,
    # plus one extra departure event each when n=1: 2+2+3 + 3+3+4 = 17
    assert count_states_oracle(tiny) == 17
    assert len(index) == 17


@pytest.mark.parametrize("k,expected", [(4, 2192), (6, 6016), (10, 26112)])
def test_table2_counts_frozen(k, expected):
    cfg = default_config(k_max=k)
    assert count_states_oracle(cfg) == expected
    assert len(enumerate_states(cfg)) == expected


def test_round_trip_and_lexicographic_order(table2):
    index = enumerate_states(table2)
    assert index.states == sorted(index.states)
    for i, s in enumerate(index.states):
        assert index.position(s) == i


def test_every_state_is_consistent(table2):
    index = enumerate_states(table2)
    codes = index.codes
    for s in index.states:
        assert ru_in_use(s) <= s.m <= table2.k_max
        if codes.is_departure(s.event):
            assert s.n[s.event - 1] == 1
        if codes.is_release(s.event):
            assert s.b[s.event - codes.n - 1] >= 1
        if s.event == codes.fleet_gain:
            assert s.m < table2.k_max
        if s.event == codes.fleet_loss:
            assert s.m >= 1


# ---------------------------------------------------------------------------
# feasible actions
# ---------------------------------------------------------------------------


def test_empty_system_offers_everything(table2):
    codes = Codes(table2)
    s = reference_state(table2)
    acts = feasible_actions(table2, s)
    assert acts == [Codes.DISCARD] + [codes.platoon(i) for i in (1, 2, 3, 4)] + \
        [codes.vfc(j) for j in (1, 2, 3)]


def test_saturated_system_only_discards(table2):
    s = State((1, 1, 1, 1), (0, 0, 2), 6, Codes.ARRIVAL)
    assert feasible_actions(table2, s) == [Codes.DISCARD]


def test_non_arrival_events_are_noop(table2):
    codes = Codes(table2)
    s = State((0, 1, 0, 0), (0, 0, 0), 6, codes.departure(2))
    assert feasible_actions(table2, s) == [codes.noop]


def test_vfc_actions_respect_free_units(table2):
    codes = Codes(table2)
    s = State((1, 1, 1, 1), (1, 0, 0), 3, Codes.ARRIVAL)  # 2 units free
    acts = feasible_actions(table2, s)
    assert acts == [Codes.DISCARD, codes.vfc(1), codes.vfc(2)]


def test_actions_sorted_and_never_empty(table2):
    index = enumerate_states(table2)
    alphabet = set(range(table2.n_platoon + table2.n_r + 2))
    for s in index.states:
        acts = feasible_actions(table2, s)
        assert acts
        assert acts == sorted(acts)
        assert set(acts) <= alphabet


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def test_platoon_placement(table2):
    codes = Codes(table2)
    s = State((0, 0, 0, 0), (0, 0, 0), 5, Codes.ARRIVAL)
    occ = apply_dynamics(table2, s, codes.platoon(2))
    assert occ == ((0, 1, 0, 0), (0, 0, 0), 5)


def test_discard_leaves_occupancy(table2):
    s = State((0, 0, 1, 0), (1, 0, 0), 4, Codes.ARRIVAL)
    assert apply_dynamics(table2, s, Codes.DISCARD) == ((0, 0, 1, 0), (1, 0, 0), 4)


def test_vfc_placement(table2):
    codes = Codes(table2)
    s = State((1, 1, 1, 1), (0, 0, 0), 6, Codes.ARRIVAL)
    occ = apply_dynamics(table2, s, codes.vfc(3))
    assert occ == ((1, 1, 1, 1), (0, 0, 1), 6)


def test_departure_and_release(table2):
    codes = Codes(table2)
    s = State((1, 0, 1, 0), (1, 0, 0), 4, codes.release(1))
    assert apply_dynamics(table2, s, codes.noop) == ((1, 0, 1, 0), (0, 0, 0), 4)
    s = State((1, 0, 1, 0), (0, 0, 0), 4, codes.departure(3))
    assert apply_dynamics(table2, s, codes.noop) == ((1, 0, 0, 0), (0, 0, 0), 4)


def test_fleet_gain(table2):
    codes = Codes(table2)
    s = State((0, 0, 0, 0), (0, 0, 0), 2, codes.fleet_gain)
    assert apply_dynamics(table2, s, codes.noop) == ((0, 0, 0, 0), (0, 0, 0), 3)


def test_fleet_loss_with_spare_units(table2):
    codes = Codes(table2)
    s = State((0, 0, 0, 0), (1, 0, 0), 3, codes.fleet_loss)
    assert apply_dynamics(table2, s, codes.noop) == ((0, 0, 0, 0), (1, 0, 0), 2)


def test_fleet_loss_interrupts_largest_class(table2):
    codes = Codes(table2)
    # all two units held by one 2-unit task: the loss interrupts it
    s = State((0, 0, 0, 0), (0, 1, 0), 2, codes.fleet_loss)
    assert apply_dynamics(table2, s, codes.noop) == ((0, 0, 0, 0), (0, 0, 0), 1)
    # mixed classes: the largest occupied class is interrupted
    s = State((0, 0, 0, 0), (1, 1, 1), 6, codes.fleet_loss)
    assert apply_dynamics(table2, s, codes.noop) == ((0, 0, 0, 0), (1, 1, 0), 5)


def test_infeasible_action_raises(table2):
    codes = Codes(table2)
    s = State((1, 0, 0, 0), (0, 0, 0), 6, Codes.ARRIVAL)
    with pytest.raises(InfeasibleActionError):
        apply_dynamics(table2, s, codes.platoon(1))      # vehicle busy
    s = State((0, 0, 0, 0), (0, 0, 0), 6, codes.departure(1))
    with pytest.raises(InfeasibleActionError):
        apply_dynamics(table2, s, Codes.DISCARD)          # only no-op allowed


def test_dynamics_exhaustively_feasible():
    cfg = default_config(k_max=4)
    index = enumerate_states(cfg)
    for s in index.states:
        for a in feasible_actions(cfg, s):
            occ = apply_dynamics(cfg, s, a)
            assert all(bit in (0, 1) for bit in occ.n)
            assert all(c >= 0 for c in occ.b)
            assert 0 <= occ.m <= cfg.k_max
            assert ru_in_use(occ) <= occ.m


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 3), n_r=st.integers(1, 3), k=st.integers(1, 5))
def test_dynamics_invariants_random_shapes(n, n_r, k):
    if n_r > k:
        k = n_r
    cfg = default_config(n_platoon=n, f_platoon=(600.0,) * n, n_r=n_r, k_max=k)
    index = enumerate_states(cfg)
    assert count_states_oracle(cfg) == len(index)
    for s in index.states:
        for a in feasible_actions(cfg, s):
            occ = apply_dynamics(cfg, s, a)
            assert ru_in_use(occ) <= occ.m <= cfg.k_max
            assert all(c >= 0 for c in occ.b)


def test_reference_state_exists(table2, tiny):
    for cfg in (table2, tiny):
        index = enumerate_states(cfg)
        assert index.position(reference_state(cfg)) >= 0


def test_labels(table2):
    index = enumerate_states(table2)
    codes = index.codes
    s = State((0, 1, 0, 0), (0, 0, 1), 5, codes.release(3))
    assert index.state_label(s) == "0,1,0,0|0,0,1|5|L3"
    assert codes.action_label(Codes.DISCARD) == "discard"
    assert codes.action_label(codes.platoon(2)) == "platoon:2"
    assert codes.action_label(codes.vfc(3)) == "vfc:3"
    assert codes.action_label(codes.noop) == "noop"
    assert codes.event_label(Codes.ARRIVAL) == "A"
    assert codes.event_label(codes.fleet_gain) == "F+1"
    assert codes.event_label(codes.fleet_loss) == "F-1"

import dataclasses
import itertools

import numpy as np
import pytest

from platoonfog import default_config
from platoonfog.model import build_model
from platoonfog.simulate import SimConfig, simulate_policy
from platoonfog.solver import (
    StationaryPolicy,
    bellman_q,
    decision_distribution,
    dump_policy,
    equal_probability_policy,
    evaluate_policy,
    extract_policy,
    greedy_policy,
    optimal_policy,
    stationary_distribution,
    stopping_threshold,
    value_iteration,
)
from platoonfog.states import Codes, State, enumerate_states, feasible_actions
from platoonfog import kernels

# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def dense_policy_system(model, actions):
    """Dense (R_pi, P_pi) of a deterministic policy, built row by row."""
    n = model.n_states
    r_pi = np.zeros(n)
    p_pi = np.zeros((n, n))
    for s in range(n):
        r = model.row_for(s, int(actions[s]))
        r_pi[s] = model.row_reward[r]
        for dst, p in model.uniformized_row(r).items():
            p_pi[s, dst] += p
    return r_pi, p_pi


def evaluate_dense(model, actions):
    """Oracle: exact policy value by a dense linear solve."""
    r_pi, p_pi = dense_policy_system(model, actions)
    return np.linalg.solve(np.eye(model.n_states) - model.gamma * p_pi, r_pi)


def brute_force_optimum(model, cfg):
    """Oracle: enumerate every deterministic policy and keep the best values."""
    index = model.index
    choices = [feasible_actions(cfg, s) for s in index.states]
    best = np.full(model.n_states, -np.inf)
    best_actions = None
    for combo in itertools.product(*choices):
        v = evaluate_dense(model, np.asarray(combo))
        if np.all(v >= best - 1e-9) and v.sum() > np.where(np.isfinite(best), best, -1e18).sum():
            best, best_actions = v, np.asarray(combo)
    return best, best_actions


@pytest.fixture(scope="module")
def tiny_model(tiny):
    return build_model(tiny)


# ---------------------------------------------------------------------------
# value iteration basics
# ---------------------------------------------------------------------------


def test_zero_rewards_give_zero_values(tiny_model):
    model = tiny_model
    saved = model.row_reward.copy()
    try:
        model.row_reward[:] = 0.0
        res = value_iteration(model)
        assert res.iterations == 1
        assert np.all(res.values == 0.0)
    finally:
        model.row_reward[:] = saved


def test_single_state_geometric_series():
    # one state, one action, self loop: v = 1 / (1 - gamma)
    gamma = 0.995
    v, residuals = kernels.vi_solve(
        np.array([1.0]), np.array([0]), np.array([0]), np.array([2.0]),
        np.array([0, 1]), np.array([0, 1]), np.array([2.0]), np.array([0]),
        10.0, gamma, 1e-13, 50_000)
    assert v[0] == pytest.approx(1.0 / (1.0 - gamma), rel=1e-9)
    assert np.all(residuals[1:] <= gamma * residuals[:-1] + 1e-12)


def test_tiny_instance_against_brute_force(tiny, tiny_model):
    best_values, best_actions = brute_force_optimum(tiny_model, tiny)
    res = value_iteration(tiny_model, epsilon=1e-4)
    assert np.array_equal(res.policy, best_actions)
    assert np.allclose(res.values, best_values, rtol=1e-6)
    # the default stopping scale already locks in the same policy
    assert np.array_equal(value_iteration(tiny_model).policy, best_actions)


def test_value_iteration_threshold_and_trace(tiny_model):
    res = value_iteration(tiny_model)
    assert res.final_residual < res.threshold
    assert res.threshold == pytest.approx(stopping_threshold(tiny_model), rel=1e-15)
    assert res.iterations == len(res.residuals)
    # fp slack scales with the value magnitudes, not the residuals
    assert np.all(res.residuals[1:] <= res.gamma * res.residuals[:-1] + 1e-10)


def test_policy_is_feasible(table2):
    cfg = default_config(k_max=5)
    model = build_model(cfg)
    res = value_iteration(model)
    for s_idx, a in enumerate(res.policy):
        assert a in feasible_actions(cfg, model.index[s_idx])


def test_argmax_invariant_under_reward_scaling(tiny_model):
    res = value_iteration(tiny_model)
    saved = tiny_model.row_reward.copy()
    try:
        tiny_model.row_reward[:] *= 3.7
        scaled = value_iteration(tiny_model)
        assert np.array_equal(scaled.policy, res.policy)
    finally:
        tiny_model.row_reward[:] = saved


def test_extract_policy_tie_break(tiny_model):
    # constant Q values tie everywhere: the smallest action code must win
    q = bellman_q(tiny_model, np.zeros(tiny_model.n_states))
    saved = tiny_model.row_reward.copy()
    try:
        tiny_model.row_reward[:] = 1.0 - tiny_model.gamma * 0.0
        actions = extract_policy(tiny_model, np.zeros(tiny_model.n_states))
        starts = tiny_model.state_ptr[:-1]
        assert np.array_equal(actions, tiny_model.row_action[starts])
    finally:
        tiny_model.row_reward[:] = saved
    assert q.shape == (tiny_model.n_rows,)


# ---------------------------------------------------------------------------
# policy evaluation
# ---------------------------------------------------------------------------


def test_evaluate_policy_matches_dense_oracle(tiny, tiny_model):
    for policy in (greedy_policy(tiny, tiny_model.index),
                   optimal_policy(value_iteration(tiny_model))):
        v = evaluate_policy(tiny_model, policy)
        dense = evaluate_dense(tiny_model, policy.actions)
        assert np.allclose(v, dense, rtol=1e-9, atol=1e-8)


def test_optimal_dominates_baselines_componentwise(tiny, tiny_model):
    v_star = evaluate_policy(tiny_model, optimal_policy(value_iteration(tiny_model)))
    for baseline in (greedy_policy(tiny, tiny_model.index),
                     equal_probability_policy(tiny, tiny_model.index)):
        v = evaluate_policy(tiny_model, baseline)
        assert np.all(v_star >= v - 1e-8)


def test_evaluate_optimal_policy_close_to_vi_values(tiny_model):
    res = value_iteration(tiny_model)
    v = evaluate_policy(tiny_model, optimal_policy(res))
    envelope = 2 * res.threshold / (1 - res.gamma)
    assert np.max(np.abs(v - res.values)) <= envelope


def test_always_discard_hand_system(tiny):
    """Closed-form check: under always-discard only four states are reachable
    from the empty fleet and their values solve a 4x4 linear system."""
    model = build_model(tiny)
    index = model.index
    codes = index.codes
    y, gamma, alpha = model.y, model.gamma, tiny.alpha
    lam = tiny.n_platoon * tiny.lambda_p

    s_a0 = index.position(State((0,), (0,), 0, Codes.ARRIVAL))
    s_g0 = index.position(State((0,), (0,), 0, codes.fleet_gain))
    s_a1 = index.position(State((0,), (0,), 1, Codes.ARRIVAL))
    s_l1 = index.position(State((0,), (0,), 1, codes.fleet_loss))
    order = [s_a0, s_g0, s_a1, s_l1]

    # hand-built uniformized rows over the reachable set
    def row(beta_val, targets):
        r = np.zeros(4)
        for pos, rate in targets.items():
            r[pos] += rate / y
        return r, beta_val

    beta0 = lam + tiny.lambda_v
    beta1 = lam + tiny.mu_v
    rows = [
        row(beta0, {0: lam, 1: tiny.lambda_v}),
        row(beta1, {2: lam, 3: tiny.mu_v}),
        row(beta1, {2: lam, 3: tiny.mu_v}),
        row(beta0, {0: lam, 1: tiny.lambda_v}),
    ]
    p = np.zeros((4, 4))
    r_vec = np.zeros(4)
    incomes = [-tiny.zeta, 0.0, -tiny.zeta, 0.0]
    for i, ((pr, beta_val), u) in enumerate(zip(rows, incomes)):
        p[i] = pr
        p[i, i] += 1.0 - beta_val / y
        r_vec[i] = u * (alpha + beta_val) / (alpha + y)
    v_hand = np.linalg.solve(np.eye(4) - gamma * p, r_vec)

    discard_actions = np.array([
        Codes.DISCARD if s.event == Codes.ARRIVAL else codes.noop
        for s in index.states])
    v = evaluate_policy(model, StationaryPolicy.deterministic(discard_actions))
    assert np.allclose(v[order], v_hand, rtol=1e-10, atol=1e-8)


def test_evaluate_randomized_policy_against_simulation(tiny):
    model = build_model(tiny)
    policy = equal_probability_policy(tiny, model.index)
    v = evaluate_policy(model, policy)
    ref = model.index.position(State((0,), (0,), 1, Codes.ARRIVAL))
    sim = SimConfig(horizon_seconds=120.0, max_events=10**6,
                    replications=3000, seed=11)
    stats = simulate_policy(tiny, policy, sim, index=model.index,
                            start=model.index[ref])
    hw = stats.ci_halfwidths["discounted_reward"]
    assert abs(stats.discounted_reward - v[ref]) <= max(3 * hw, 0.02 * abs(v[ref]))


# ---------------------------------------------------------------------------
# baseline policies
# ---------------------------------------------------------------------------


def test_greedy_prefers_fastest_idle_vehicle(table2):
    index = enumerate_states(table2)
    codes = Codes(table2)
    policy = greedy_policy(table2, index)
    s = index.position(State((0, 0, 0, 0), (0, 0, 0), 6, Codes.ARRIVAL))
    assert policy.actions[s] == codes.platoon(2)          # 660 cycles/s
    s = index.position(State((0, 1, 0, 0), (0, 0, 0), 6, Codes.ARRIVAL))
    assert policy.actions[s] == codes.platoon(4)          # 650 next
    s = index.position(State((1, 1, 1, 1), (1, 0, 0), 3, Codes.ARRIVAL))
    assert policy.actions[s] == codes.vfc(2)              # capped by free units
    s = index.position(State((1, 1, 1, 1), (0, 0, 2), 6, Codes.ARRIVAL))
    assert policy.actions[s] == Codes.DISCARD
    s = index.position(State((1, 1, 1, 1), (0, 0, 0), 6, Codes.ARRIVAL))
    assert policy.actions[s] == codes.vfc(3)


def test_greedy_noop_elsewhere(table2):
    index = enumerate_states(table2)
    codes = Codes(table2)
    policy = greedy_policy(table2, index)
    for s_idx, s in enumerate(index.states):
        if s.event != Codes.ARRIVAL:
            assert policy.actions[s_idx] == codes.noop


def test_equal_probability_uniform_support(table2):
    index = enumerate_states(table2)
    policy = equal_probability_policy(table2, index)
    s = index.position(State((0, 0, 0, 0), (0, 0, 0), 6, Codes.ARRIVAL))
    actions, probs = policy.support(s)
    assert len(actions) == 8
    assert np.allclose(probs, 1 / 8)
    s = index.position(State((1, 1, 1, 1), (0, 0, 2), 6, Codes.ARRIVAL))
    actions, probs = policy.support(s)
    assert list(actions) == [Codes.DISCARD] and probs[0] == 1.0
    codes = index.codes
    s = index.position(State((0, 0, 0, 0), (0, 1, 0), 3, codes.release(2)))
    actions, probs = policy.support(s)
    assert list(actions) == [codes.noop] and probs[0] == 1.0


# ---------------------------------------------------------------------------
# stationary distribution and dumps
# ---------------------------------------------------------------------------


def test_stationary_matches_power_iteration(tiny, tiny_model):
    policy = greedy_policy(tiny, tiny_model.index)
    pi = stationary_distribution(tiny_model, policy)
    _, p_dense = dense_policy_system(tiny_model, policy.actions)
    x = np.full(tiny_model.n_states, 1.0 / tiny_model.n_states)
    for _ in range(200_000):
        x_next = x @ p_dense
        if np.abs(x_next - x).max() < 1e-14:
            x = x_next
            break
        x = x_next
    assert np.allclose(pi, x, atol=1e-8)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_decision_distribution_matches_simulation(table2):
    model = build_model(table2)
    policy = optimal_policy(value_iteration(model))
    mix = decision_distribution(model, policy)
    stats = simulate_policy(
        table2, policy,
        SimConfig(max_events=30_000, replications=16, seed=3),
        index=model.index)
    for name, exact in (("p_case0", mix.p_case0), ("p_case1", mix.p_case1),
                        ("p_case2", mix.p_case2)):
        assert getattr(stats, name) == pytest.approx(
            exact, abs=2 * stats.ci_halfwidths[name])
    for j, exact in enumerate(mix.p_alloc, start=1):
        assert stats.p_alloc[j - 1] == pytest.approx(
            exact, abs=max(2 * stats.ci_halfwidths[f"p_a{j}"], 5e-3))
    assert mix.p_case0 + mix.p_case1 + mix.p_case2 == pytest.approx(1.0, abs=1e-12)


def test_decision_distribution_rare_arrivals():
    cfg = default_config(lambda_p=1e-3)
    model = build_model(cfg)
    policy = optimal_policy(value_iteration(model))
    mix = decision_distribution(model, policy)
    # an almost idle system always finds a platoon vehicle free
    assert mix.p_case0 == pytest.approx(1.0, abs=1e-4)


def test_fog_share_rises_then_falls_on_a_slow_channel():
    """With a slow channel the relay delay grows so fast in the fleet size
    that large fleets push arrivals back toward the platoon or the discard
    penalty: the fog share must peak at an interior fleet bound."""
    shares = []
    for k in (4, 6, 9, 10):
        cfg = default_config(
            k_max=k, dcf=dataclasses.replace(default_config().dcf, bit_rate=3e5))
        model = build_model(cfg)
        policy = optimal_policy(value_iteration(model))
        shares.append(decision_distribution(model, policy).p_case1)
    assert shares[0] < shares[1] < shares[2]
    assert shares[3] < shares[2]


def test_dump_policy_format(tiny, tiny_model, tmp_path):
    res = value_iteration(tiny_model)
    path = tmp_path / "policy.tsv"
    dump_policy(tiny_model.index, optimal_policy(res), path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(tiny_model.index)
    state_label, action = lines[0].split("\t")
    assert "|" in state_label
    assert action in {"discard", "noop", "platoon:1", "vfc:1"}
    # randomized policies list their support
    eq_path = tmp_path / "equal.tsv"
    dump_policy(tiny_model.index, equal_probability_policy(tiny, tiny_model.index), eq_path)
    assert any(":" in line.split("\t")[1] and "," in line.split("\t")[1]
               for line in eq_path.read_text().splitlines())

"""Discounted value iteration, exact policy evaluation, and baseline policies.

Value iteration runs synchronous (Jacobi) Bellman sweeps on the uniformized
model from v = 0 and stops once the sup-norm sweep difference drops below
``epsilon * (1 - gamma) / (2 * gamma)``, which makes the returned policy
epsilon-optimal. Ties in the final argmax break toward the smallest action
code: discard, then platoon vehicles by index, then fog offloads by unit
count, then no-op.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import kernels
from .config import SystemConfig
from .model import UniformizedModel
from .states import Codes, StateIndex, feasible_actions, ru_in_use

POLICY_EVAL_RESIDUAL = 1e-10
VI_SWEEP_BUDGET = 10_000_000


class NonConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the residual trace."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class SolveResult:
    values: np.ndarray        # converged value per state
    policy: np.ndarray        # greedy action code per state
    iterations: int
    final_residual: float
    residuals: np.ndarray     # sup-norm difference per sweep
    threshold: float
    gamma: float


class StationaryPolicy:
    """Per-state distribution over feasible actions, stored CSR style."""

    def __init__(self, ptr, actions, probs):
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.actions = np.asarray(actions, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=np.float64)

    @classmethod
    def deterministic(cls, actions) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        return cls(np.arange(actions.size + 1), actions, np.ones(actions.size))

    @classmethod
    def from_supports(cls, supports) -> "StationaryPolicy":
        """Build from an iterable of [(action, prob), ...] per state."""
        ptr = [0]
        actions, probs = [], []
        for support in supports:
            for a, p in support:
                actions.append(a)
                probs.append(p)
            ptr.append(len(actions))
        return cls(ptr, actions, probs)

    def __len__(self):
        return self.ptr.size - 1

    def support(self, s: int):
        lo, hi = self.ptr[s], self.ptr[s + 1]
        return self.actions[lo:hi], self.probs[lo:hi]

    def is_deterministic(self) -> bool:
        return bool(np.all(np.diff(self.ptr) == 1))


def stopping_threshold(model: UniformizedModel, epsilon=None) -> float:
    eps = model.cfg.epsilon if epsilon is None else epsilon
    return eps * (1.0 - model.gamma) / (2.0 * model.gamma)


def bellman_q(model: UniformizedModel, v: np.ndarray) -> np.ndarray:
    """Action values of every row given a state-value vector."""
    w = np.add.reduceat(model.occ_event_rate * v[model.occ_event_state],
                        model.occ_ptr[:-1])
    return (model.row_reward
            + model.gamma * (1.0 - model.row_beta / model.y) * v[model.row_state]
            + (model.gamma / model.y) * w[model.row_occ])


def extract_policy(model: UniformizedModel, v: np.ndarray) -> np.ndarray:
    """Greedy action per state; exact ties go to the smallest action code."""
    q = bellman_q(model, v)
    starts = model.state_ptr[:-1]
    vmax = np.maximum.reduceat(q, starts)
    candidates = np.where(q == vmax[model.row_state], np.arange(q.size), q.size)
    first = np.minimum.reduceat(candidates, starts)
    return model.row_action[first]


def value_iteration(model: UniformizedModel, epsilon=None,
                    max_sweeps: int = VI_SWEEP_BUDGET) -> SolveResult:
    """Solve the model by synchronous Bellman sweeps from v = 0."""
    threshold = stopping_threshold(model, epsilon)
    v, residuals = kernels.vi_solve(
        model.row_reward, model.row_state, model.row_occ, model.row_beta,
        model.state_ptr, model.occ_ptr, model.occ_event_rate,
        model.occ_event_state, model.y, model.gamma, threshold, max_sweeps)
    if residuals[-1] >= threshold:
        raise NonConvergenceError(
            f"no convergence within {max_sweeps} sweeps "
            f"(residual {residuals[-1]:.3e}, threshold {threshold:.3e})",
            residuals)
    # Jacobi sweeps contract by at least gamma; a material violation means
    # the model construction is broken, not a rounding artifact.
    slack = residuals[1:] - model.gamma * residuals[:-1]
    if slack.size and float(slack.max()) > 1e-9:
        raise NonConvergenceError(
            f"contraction violated by {slack.max():.3e}", residuals)
    return SolveResult(
        values=v,
        policy=extract_policy(model, v),
        iterations=len(residuals),
        final_residual=float(residuals[-1]),
        residuals=residuals,
        threshold=threshold,
        gamma=model.gamma,
    )


def _row_weights(model: UniformizedModel, policy: StationaryPolicy) -> np.ndarray:
    """Policy probability of each model row's action in its state."""
    w = np.zeros(model.n_rows)
    for s in range(model.n_states):
        actions, probs = policy.support(s)
        for a, p in zip(actions, probs):
            if p != 0.0:
                w[model.row_for(s, int(a))] = p
    return w


def _occupancy_coupling(model: UniformizedModel, ev_scale, row_scale):
    """Occupancy-to-occupancy matrix sum_e rate_e*ev_scale * row_scale(row).

    Entry (o, o') accumulates, over the events e of occupancy o leading to
    state t = (o, e) and over the rows of t landing in occupancy o', the
    product rate_e * ev_scale[entry] * row_scale[row]. This is the coupling
    block left after eliminating the per-state equations, and it is what
    makes exact policy evaluation cheap: occupancies are roughly 6x fewer
    than states.
    """
    n_occ = len(model.occupancies)
    ev_src = np.repeat(np.arange(n_occ), np.diff(model.occ_ptr))
    ev_state = model.occ_event_state
    ev_coef = model.occ_event_rate * ev_scale
    # expand each event entry over the rows of its target state
    counts = (model.state_ptr[ev_state + 1] - model.state_ptr[ev_state]).astype(np.int64)
    total = int(counts.sum())
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    rows = np.repeat(model.state_ptr[ev_state], counts) + offsets
    data = np.repeat(ev_coef, counts) * row_scale[rows]
    coo_i = np.repeat(ev_src, counts)
    coo_j = model.row_occ[rows]
    return sp.coo_matrix((data, (coo_i, coo_j)), shape=(n_occ, n_occ)).tocsr()


def _policy_value_residual(model, w_row, r_bar, v) -> float:
    w = np.add.reduceat(model.occ_event_rate * v[model.occ_event_state],
                        model.occ_ptr[:-1])
    q = w[model.row_occ] / (model.cfg.alpha + model.row_beta)
    rhs = r_bar + np.bincount(model.row_state, weights=w_row * q,
                              minlength=model.n_states)
    return float(np.max(np.abs(rhs - v)))


def evaluate_policy(model: UniformizedModel, policy: StationaryPolicy) -> np.ndarray:
    """Exact value of a stationary policy on the continuous-time process.

    Each action keeps its own effective discount beta/(alpha + beta), so
    randomized policies are priced exactly as the simulator plays them; for
    deterministic policies this coincides with the uniformized fixed point.
    Eliminating the per-state equations leaves a sparse system over
    occupancy aggregates, solved directly; the fixed-point residual of the
    recovered state values is verified against POLICY_EVAL_RESIDUAL.
    """
    w_row = _row_weights(model, policy)
    alpha = model.cfg.alpha
    r_bar = np.bincount(model.row_state, weights=w_row * model.row_reward_raw,
                        minlength=model.n_states)
    row_scale = w_row / (alpha + model.row_beta)

    n_occ = len(model.occupancies)
    coupling = _occupancy_coupling(model, np.ones_like(model.occ_event_rate),
                                   row_scale)
    ev_src = np.repeat(np.arange(n_occ), np.diff(model.occ_ptr))
    c = np.bincount(ev_src,
                    weights=model.occ_event_rate * r_bar[model.occ_event_state],
                    minlength=n_occ)
    w_occ = spsolve((sp.eye(n_occ, format="csr") - coupling).tocsc(), c)

    v = r_bar + np.bincount(model.row_state,
                            weights=row_scale * w_occ[model.row_occ],
                            minlength=model.n_states)
    residual = _policy_value_residual(model, w_row, r_bar, v)
    if residual > POLICY_EVAL_RESIDUAL:
        raise NonConvergenceError(
            f"policy evaluation residual {residual:.3e}", np.array([residual]))
    return v


def _occupancy_jump_flow(model: UniformizedModel, w_row: np.ndarray) -> np.ndarray:
    """Stationary measure of the post-action occupancy jump chain."""
    n_occ = len(model.occupancies)
    ev_src = np.repeat(np.arange(n_occ), np.diff(model.occ_ptr))
    # event pick uses the source occupancy's total rate
    flow = _occupancy_coupling(model, 1.0 / model.occ_beta[ev_src], w_row)
    m = (flow.T - sp.eye(n_occ, format="csr")).tocoo()
    keep = m.row != n_occ - 1
    rows = np.concatenate([m.row[keep], np.full(n_occ, n_occ - 1)])
    cols = np.concatenate([m.col[keep], np.arange(n_occ)])
    data = np.concatenate([m.data[keep], np.ones(n_occ)])
    lhs = sp.coo_matrix((data, (rows, cols)), shape=(n_occ, n_occ)).tocsc()
    rhs = np.zeros(n_occ)
    rhs[n_occ - 1] = 1.0
    psi = spsolve(lhs, rhs)
    if psi.min() < -1e-8:
        raise NonConvergenceError("occupancy flow solve failed",
                                  np.array([float(psi.min())]))
    return np.clip(psi, 0.0, None)


def stationary_distribution(model: UniformizedModel, policy: StationaryPolicy) -> np.ndarray:
    """Fraction of time the process spends in each state under a policy.

    Solved on the occupancy-level jump-flow chain and expanded back to
    states, weighting each state by its expected sojourn under the policy.
    """
    w_row = _row_weights(model, policy)
    psi = _occupancy_jump_flow(model, w_row)
    n_occ = len(model.occupancies)
    ev_src = np.repeat(np.arange(n_occ), np.diff(model.occ_ptr))
    # jump measure of state (o, e), times its expected sojourn under the policy
    mu = np.zeros(model.n_states)
    mu[model.occ_event_state] = (
        model.occ_event_rate * psi[ev_src] / model.occ_beta[ev_src])
    sojourn = np.bincount(model.row_state, weights=w_row / model.row_beta,
                          minlength=model.n_states)
    pi = mu * sojourn
    return pi / pi.sum()


class DecisionMix(NamedTuple):
    """Exact long-run arrival-decision probabilities under a policy."""

    p_case0: float          # placed on a platoon vehicle
    p_case1: float          # offloaded to the fog pool
    p_case2: float          # discarded
    p_alloc: tuple          # fog offloads split by allocated units


def decision_distribution(model: UniformizedModel, policy: StationaryPolicy) -> DecisionMix:
    """Noise-free counterpart of the simulator's case statistics.

    Arrivals are Poisson, so they sample the arrival state of each occupancy
    at a frequency proportional to that occupancy's jump-flow over its total
    rate; the policy's action distribution at those states then fixes the
    decision mix exactly.
    """
    cfg = model.cfg
    codes = model.index.codes
    w_row = _row_weights(model, policy)
    psi = _occupancy_jump_flow(model, w_row)
    if not np.all(model.occ_event_code[model.occ_ptr[:-1]] == Codes.ARRIVAL):
        raise AssertionError("occupancy event tables must lead with the arrival clock")
    case = np.zeros(3)
    alloc = np.zeros(cfg.n_r)
    for o in range(len(model.occupancies)):
        weight = psi[o] / model.occ_beta[o]
        if weight == 0.0:
            continue
        # the arrival clock is always an occupancy's first event entry
        arrival_state = int(model.occ_event_state[model.occ_ptr[o]])
        for r in model.rows_of(arrival_state):
            p = w_row[r]
            if p == 0.0:
                continue
            a = int(model.row_action[r])
            if a == Codes.DISCARD:
                case[2] += weight * p
            elif codes.is_platoon(a):
                case[0] += weight * p
            else:
                case[1] += weight * p
                alloc[codes.vfc_units(a) - 1] += weight * p
    case /= case.sum()
    p_alloc = tuple(alloc / alloc.sum()) if alloc.sum() > 0 else (float("nan"),) * cfg.n_r
    return DecisionMix(float(case[0]), float(case[1]), float(case[2]), p_alloc)


def optimal_policy(result: SolveResult) -> StationaryPolicy:
    return StationaryPolicy.deterministic(result.policy)


def greedy_policy(cfg: SystemConfig, index: StateIndex) -> StationaryPolicy:
    """Put each arrival on the fastest idle vehicle, else on as many free
    resource units as allowed, else discard. No-op on every other event."""
    codes = Codes(cfg)
    actions = np.empty(len(index), dtype=np.int64)
    for si, s in enumerate(index.states):
        if s.event != Codes.ARRIVAL:
            actions[si] = codes.noop
            continue
        idle = [i for i, busy in enumerate(s.n, start=1) if not busy]
        if idle:
            actions[si] = codes.platoon(min(idle, key=lambda i: (-cfg.f_platoon[i - 1], i)))
            continue
        free = s.m - ru_in_use(s)
        if free >= 1:
            actions[si] = codes.vfc(min(cfg.n_r, free))
        else:
            actions[si] = Codes.DISCARD
    return StationaryPolicy.deterministic(actions)


def equal_probability_policy(cfg: SystemConfig, index: StateIndex) -> StationaryPolicy:
    """Uniform draw over the feasible actions at each arrival; no-op otherwise."""
    supports = []
    for s in index.states:
        acts = feasible_actions(cfg, s)
        p = 1.0 / len(acts)
        supports.append([(a, p) for a in acts])
    return StationaryPolicy.from_supports(supports)


def dump_policy(index: StateIndex, policy: StationaryPolicy, path):
    """Line-delimited ``state TAB action`` dump in state-index order.

    Randomized policies list every supported action as ``action:prob``.
    """
    codes = index.codes
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in range(len(index)):
            actions, probs = policy.support(s)
            if actions.size == 1:
                entry = codes.action_label(int(actions[0]))
            else:
                entry = ",".join(
                    f"{codes.action_label(int(a))}:{p:.9g}"
                    for a, p in zip(actions, probs))
            fh.write(f"{index.state_label(index[s])}\t{entry}\n")

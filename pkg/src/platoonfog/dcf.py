"""Analytical contention-based MAC delay model plus a slot-level Monte-Carlo oracle.

A station transmitting among ``n_tr`` contenders sees a per-slot transmission
probability ``omega`` and a conditional collision probability ``q`` that
jointly solve a fixed point. A task split into ``theta`` sub-tasks costs
``theta * t_slot * e_tr`` seconds, where ``t_slot`` is the mean slot duration
(idle, success, or collision) and ``e_tr`` the mean number of slots one
sub-task spends in binary exponential backoff.

The backoff chain behind ``expected_slots``: attempt k draws a counter
uniformly from [0, 2^k * w_min - 1] and spends counter+1 slots; the window
doubles on collision up to stage ``m``. Passing the retry limit charges one
extra capped-window attempt (the drop handling), after which the sub-task
keeps contending at the capped window until it gets through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DcfParams

PICARD_DAMPING = 0.5
PICARD_BUDGET = 100_000
PICARD_TOL = 1e-12
RESIDUAL_LIMIT = 1e-10


class FixedPointError(RuntimeError):
    """Fixed-point iteration failed to converge; carries the last residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DcfResult:
    """Converged channel metrics for one (n_tr, theta) transmission setting."""

    omega: float      # per-slot transmission probability
    q: float          # conditional collision probability
    q_idle: float
    q_s: float
    q_c: float
    t_slot: float     # mean slot duration, s
    e_tr: float       # mean slots per sub-task
    n_tr: int


def transmission_probability(params: DcfParams, q: float) -> float:
    """Per-slot transmission probability of a station seeing collision rate q."""
    w, m = params.w_min, params.m
    # (1 - (2q)^m) / (1 - 2q) written as a finite geometric sum; exact at 2q = 1.
    geom = 0.0
    term = 1.0
    for _ in range(m):
        geom += term
        term *= 2.0 * q
    return 2.0 / ((w + 1.0) + q * w * geom)


def _collision_map(params, n_tr, q):
    return 1.0 - (1.0 - transmission_probability(params, q)) ** (n_tr - 1)


def solve_fixed_point(params: DcfParams, n_tr: int) -> tuple[float, float]:
    """Solve the (omega, q) fixed point for ``n_tr`` contending stations.

    Damped Picard iteration on q, falling back to bisection when the damped
    map oscillates. A lone station never collides, so n_tr = 1 yields
    q = 0 and omega = 2 / (w_min + 1).
    """
    if n_tr < 1:
        raise ValueError("n_tr must be >= 1")
    if n_tr == 1:
        return transmission_probability(params, 0.0), 0.0

    q = 0.0
    residual = math.inf
    for _ in range(PICARD_BUDGET):
        target = _collision_map(params, n_tr, q)
        residual = abs(target - q)
        if residual <= PICARD_TOL:
            break
        q = (1.0 - PICARD_DAMPING) * q + PICARD_DAMPING * target

    if residual > PICARD_TOL:
        # q - map(q) is strictly increasing (the map is decreasing in q),
        # negative at 0 and positive near 1, so bisection always lands.
        lo, hi = 0.0, 1.0 - 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid - _collision_map(params, n_tr, mid) < 0.0:
                lo = mid
            else:
                hi = mid
        q = 0.5 * (lo + hi)
        residual = abs(q - _collision_map(params, n_tr, q))

    if residual > RESIDUAL_LIMIT:
        raise FixedPointError(f"no fixed point for n_tr={n_tr}", residual)
    return transmission_probability(params, q), q


def slot_probabilities(omega: float, n_tr: int) -> tuple[float, float, float]:
    """(idle, success, collision) probabilities of one slot among n_tr stations."""
    q_idle = (1.0 - omega) ** n_tr
    q_s = n_tr * omega * (1.0 - omega) ** (n_tr - 1)
    return q_idle, q_s, 1.0 - q_idle - q_s


def slot_time(params: DcfParams, omega: float, n_tr: int, theta: int) -> float:
    """Mean slot duration when tasks are split into ``theta`` sub-tasks."""
    if theta < 1:
        raise ValueError("theta must be >= 1")
    rate = params.bit_rate
    header = params.header_bits / rate
    payload = params.payload_bits / theta / rate
    ack = params.ack_bits / rate
    ack_timeout = params.ack_timeout_bits / rate
    t_s = header + payload + params.sifs + params.delta + ack + params.difs + params.delta
    t_c = header + payload + params.sifs + params.delta + ack_timeout
    q_idle, q_s, q_c = slot_probabilities(omega, n_tr)
    return q_idle * params.t_idle + q_s * t_s + q_c * t_c


def expected_slots(params: DcfParams, q: float) -> float:
    """Mean number of slots one sub-task spends in backoff at collision rate q."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    w = float(params.w_min)
    m = params.m
    q_m1 = q ** (m + 1)
    term1 = (1.0 - (m + 2) * q_m1 + (m + 1) * q ** (m + 2)) / (2.0 * (1.0 - q))
    # (1 - (2q)^{m+1}) / (1 - 2q) as a finite geometric sum; exact at 2q = 1.
    geom = 0.0
    term = 1.0
    for _ in range(m + 1):
        geom += term
        term *= 2.0 * q
    term2 = (1.0 - q) * w * geom
    term3 = (1.0 - q_m1) * w / 2.0
    term4 = 0.5 * q_m1 * (
        (m + 1)
        + (2 ** (m + 1) - 1) * w
        + (2.0 - q) * (2 ** m * w + 1.0) / (1.0 - q)
    )
    return term1 + term2 - term3 + term4


def dcf_metrics(params: DcfParams, n_tr: int, theta: int = 1) -> DcfResult:
    """Bundle the converged fixed point and derived slot metrics."""
    omega, q = solve_fixed_point(params, n_tr)
    q_idle, q_s, q_c = slot_probabilities(omega, n_tr)
    return DcfResult(
        omega=omega,
        q=q,
        q_idle=q_idle,
        q_s=q_s,
        q_c=q_c,
        t_slot=slot_time(params, omega, n_tr, theta),
        e_tr=expected_slots(params, q),
        n_tr=n_tr,
    )


def transmit_delay(params: DcfParams, n_tr: int, theta: int) -> float:
    """Seconds to transmit a task split into ``theta`` sub-tasks among n_tr stations."""
    if theta < 1:
        raise ValueError("theta must be >= 1")
    omega, q = solve_fixed_point(params, n_tr)
    return theta * slot_time(params, omega, n_tr, theta) * expected_slots(params, q)


def monte_carlo_backoff(params: DcfParams, q: float, trials: int, seed: int) -> float:
    """Slot-level simulation of the backoff chain; oracle for ``expected_slots``.

    Each trial runs one sub-task: attempt k draws a counter from
    [0, 2^k * w_min - 1] and spends counter+1 slots; collisions are
    independent with probability q. Trials that pass the retry limit pay one
    extra capped-window attempt and then retry at the capped window until a
    success. Returns the sample mean of total slots per trial.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    w, m = params.w_min, params.m
    total = np.zeros(trials)
    pending = np.arange(trials)
    for k in range(m + 1):
        draws = rng.integers(0, (1 << k) * w, size=pending.size)
        total[pending] += draws + 1
        collided = rng.random(pending.size) < q
        pending = pending[collided]
    if pending.size:
        w_cap = (1 << m) * w
        total[pending] += rng.integers(0, w_cap, size=pending.size) + 1
        attempts = rng.geometric(1.0 - q, size=pending.size)
        bounds = np.cumsum(attempts)
        draws = rng.integers(0, w_cap, size=int(bounds[-1]))
        starts = np.concatenate(([0], bounds[:-1]))
        total[pending] += np.add.reduceat(draws, starts) + attempts
    return float(total.mean())

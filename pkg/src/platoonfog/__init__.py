"""Delay-sensitive task offloading for fog-assisted vehicle platoons.

Builds the continuous-time decision model of a platoon backed by a pool of
fog vehicles, solves it by value iteration after uniformization, and
cross-checks the resulting policies against baselines with an analytic
channel-contention delay model and a Monte-Carlo event simulator.
"""

from .config import ConfigError, DcfParams, SystemConfig, default_config, load_config, parse_config
from .dcf import (
    DcfResult,
    FixedPointError,
    dcf_metrics,
    expected_slots,
    monte_carlo_backoff,
    slot_time,
    solve_fixed_point,
    transmit_delay,
)
from .kernels import backend_name
from .model import (
    OffloadDelays,
    RewardTerms,
    UniformizedModel,
    beta,
    build_model,
    cost,
    income,
    normalization_factor,
    reward,
    transitions,
)
from .simulate import SimConfig, SimStats, aggregate, run_replication, simulate_policy
from .solver import (
    DecisionMix,
    NonConvergenceError,
    SolveResult,
    StationaryPolicy,
    decision_distribution,
    dump_policy,
    equal_probability_policy,
    evaluate_policy,
    greedy_policy,
    optimal_policy,
    stationary_distribution,
    value_iteration,
)
from .states import (
    Codes,
    InfeasibleActionError,
    Occupancy,
    State,
    StateIndex,
    apply_dynamics,
    enumerate_states,
    feasible_actions,
    reference_state,
    ru_in_use,
)

__version__ = "0.1.0"

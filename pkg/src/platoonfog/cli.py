"""Batch experiment front-end: solve, simulate, and parameter sweeps to CSV.

Output is deterministic byte for byte under a fixed (config, arguments, seed)
triple; timing goes to stderr so the CSV stays reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SystemConfig, default_config, load_config
from .model import OffloadDelays, build_model
from .simulate import SimConfig, simulate_policy
from .solver import (
    dump_policy,
    equal_probability_policy,
    evaluate_policy,
    greedy_policy,
    optimal_policy,
    stationary_distribution,
    value_iteration,
)
from .states import enumerate_states, reference_state

MODES = ("solve", "simulate", "sweep-k", "sweep-lambda", "sweep-d")
STRATEGIES = ("smdp", "greedy", "equal")

SWEEP_FIELD = {"sweep-k": "k_max", "sweep-lambda": "lambda_p", "sweep-d": "d"}
DEFAULT_SWEEP = {"sweep-k": "4:10:1", "sweep-lambda": "13:20:1", "sweep-d": "20:50:10"}

COLUMNS = (
    "sweep_param", "sweep_value", "strategy",
    "p_case0", "p_case1", "p_case2", "p_a1", "p_a2", "p_a3",
    "mean_offload_delay", "reward_exact_ref", "reward_exact_mean", "reward_sim",
    "hw_p_case0", "hw_p_case1", "hw_p_case2", "hw_p_a1", "hw_p_a2", "hw_p_a3",
    "hw_mean_offload_delay", "hw_reward_sim",
    "solver_iterations", "arrivals_observed",
)


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    strategy: str = "smdp"
    sweep: tuple = ()
    sim: SimConfig = SimConfig()
    out: str | None = None
    policy_out: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.mode in SWEEP_FIELD:
            if not self.sweep:
                raise ValueError("sweep modes need a non-empty sweep range")
            if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
                raise ValueError("sweep values must be strictly increasing")


def parse_sweep(text: str) -> tuple:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad sweep spec {text!r}, expected a:b:step")
        a, b, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("sweep step must be positive")
        values = []
        v = a
        while v <= b + 1e-9:
            values.append(round(v, 9))
            v += step
        return tuple(values)
    return tuple(float(tok) for tok in text.split(","))


def _build_policy(cfg, model, strategy):
    """(policy, solver iterations) for a strategy on a built model."""
    if strategy == "smdp":
        result = value_iteration(model)
        return optimal_policy(result), result.iterations
    if strategy == "greedy":
        return greedy_policy(cfg, model.index), 0
    return equal_probability_policy(cfg, model.index), 0


def _experiment_row(cfg: SystemConfig, spec: ExperimentSpec, sweep_param: str,
                    sweep_value, stream: int, with_sim: bool):
    t0 = time.perf_counter()
    index = enumerate_states(cfg)
    delays = OffloadDelays(cfg)
    model = build_model(cfg, index, delays)
    policy, iterations = _build_policy(cfg, model, spec.strategy)
    values = evaluate_policy(model, policy)
    ref = index.position(reference_state(cfg))
    weights = stationary_distribution(model, policy)
    row = {
        "sweep_param": sweep_param,
        "sweep_value": sweep_value,
        "strategy": spec.strategy,
        "reward_exact_ref": values[ref],
        "reward_exact_mean": float(weights @ values),
        "solver_iterations": iterations,
    }
    nan = float("nan")
    stats_fields = {
        "p_case0": nan, "p_case1": nan, "p_case2": nan,
        "p_a1": nan, "p_a2": nan, "p_a3": nan,
        "mean_offload_delay": nan, "reward_sim": nan,
        "hw_p_case0": nan, "hw_p_case1": nan, "hw_p_case2": nan,
        "hw_p_a1": nan, "hw_p_a2": nan, "hw_p_a3": nan,
        "hw_mean_offload_delay": nan, "hw_reward_sim": nan,
        "arrivals_observed": 0,
    }
    if with_sim:
        stats = simulate_policy(cfg, policy, spec.sim, index=index,
                                delays=delays, stream=stream)
        alloc = list(stats.p_alloc[:3]) + [nan] * max(0, 3 - len(stats.p_alloc))
        hw = stats.ci_halfwidths
        stats_fields.update({
            "p_case0": stats.p_case0, "p_case1": stats.p_case1,
            "p_case2": stats.p_case2,
            "p_a1": alloc[0], "p_a2": alloc[1], "p_a3": alloc[2],
            "mean_offload_delay": stats.mean_offload_delay,
            "reward_sim": stats.discounted_reward,
            "hw_p_case0": hw.get("p_case0", nan),
            "hw_p_case1": hw.get("p_case1", nan),
            "hw_p_case2": hw.get("p_case2", nan),
            "hw_p_a1": hw.get("p_a1", nan), "hw_p_a2": hw.get("p_a2", nan),
            "hw_p_a3": hw.get("p_a3", nan),
            "hw_mean_offload_delay": hw.get("mean_offload_delay", nan),
            "hw_reward_sim": hw.get("discounted_reward", nan),
            "arrivals_observed": stats.arrivals_observed,
        })
    row.update(stats_fields)
    elapsed = time.perf_counter() - t0
    print(f"[timing] {sweep_param}={sweep_value} strategy={spec.strategy} "
          f"wall={elapsed:.3f}s", file=sys.stderr)
    return row, policy, index


def run_experiment(spec: ExperimentSpec, cfg: SystemConfig):
    """Rows for one experiment; also writes the policy dump when requested."""
    rows = []
    if spec.mode in ("solve", "simulate"):
        row, policy, index = _experiment_row(
            cfg, spec, "none", 0, stream=0, with_sim=spec.mode == "simulate")
        rows.append(row)
        if spec.policy_out:
            dump_policy(index, policy, spec.policy_out)
        return rows
    field = SWEEP_FIELD[spec.mode]
    for i, value in enumerate(spec.sweep):
        cast = int(value) if field == "k_max" else value
        swept = dataclasses.replace(cfg, **{field: cast})
        row, _, _ = _experiment_row(swept, spec, field, cast, stream=i,
                                    with_sim=True)
        rows.append(row)
    return rows


def format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_csv(rows, path=None):
    """Deterministic CSV: fixed header, 9 significant digits, LF endings."""
    lines = [",".join(COLUMNS)]
    lines += [",".join(format_value(row[c]) for c in COLUMNS) for row in rows]
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise RuntimeError(f"cannot write csv to {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonfog",
        description="Solve and evaluate delay-sensitive task-offloading policies.")
    parser.add_argument("--config", help="config file; defaults apply when omitted")
    parser.add_argument("--mode", required=True, choices=MODES)
    parser.add_argument("--strategy", default="smdp", choices=STRATEGIES)
    parser.add_argument("--sweep", help="a:b:step (inclusive) or comma list")
    parser.add_argument("--replications", type=int, default=8)
    parser.add_argument("--horizon-events", type=int, default=1_000_000)
    parser.add_argument("--horizon-seconds", type=float, default=None)
    parser.add_argument("--warmup", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="CSV path; stdout when omitted")
    parser.add_argument("--policy-out", help="policy dump path (solve/simulate)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        sweep: tuple = ()
        if args.mode in SWEEP_FIELD:
            sweep = parse_sweep(args.sweep or DEFAULT_SWEEP[args.mode])
        spec = ExperimentSpec(
            mode=args.mode,
            strategy=args.strategy,
            sweep=sweep,
            sim=SimConfig(
                horizon_seconds=args.horizon_seconds,
                max_events=args.horizon_events,
                replications=args.replications,
                seed=args.seed,
                warmup=args.warmup,
            ),
            out=args.out,
            policy_out=args.policy_out,
        )
        rows = run_experiment(spec, cfg)
        write_csv(rows, spec.out)
    except ConfigError as exc:
        print(f"error: config-parse: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: invalid-input: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

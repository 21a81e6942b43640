"""Throughput comparison of the compiled kernels against the pure-python lane.

Run as ``python -m platoonfog.bench``. Times a fixed number of Bellman sweeps
and a fixed number of simulated events on the baseline model, per backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .config import default_config
from .kernels import available_backends, backend_name
from .model import build_model
from .simulate import SimTables
from .solver import greedy_policy
from .states import enumerate_states, reference_state


def bench_vi(backend, model, sweeps):
    t0 = time.perf_counter()
    backend.vi_solve(
        model.row_reward, model.row_state, model.row_occ, model.row_beta,
        model.state_ptr, model.occ_ptr, model.occ_event_rate,
        model.occ_event_state, model.y, model.gamma, 0.0, sweeps)
    return time.perf_counter() - t0


def bench_sim(backend, cfg, tables, start_idx, events, seed):
    bitgen = np.random.PCG64(np.random.SeedSequence(seed))
    t0 = time.perf_counter()
    raw = backend.simulate_events(
        bitgen, tables.pol_ptr, tables.pol_row, tables.pol_cum,
        tables.row_occ, tables.row_income, tables.row_case,
        tables.row_alloc, tables.row_delay,
        tables.occ_ptr, tables.occ_rate, tables.occ_next_state,
        tables.occ_total, tables.occ_units,
        start_idx, cfg.alpha, float("inf"), events, 0.0, cfg.n_r)
    return time.perf_counter() - t0, raw[9]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--k", type=int, default=6, help="fleet bound of the benchmark model")
    parser.add_argument("--sweeps", type=int, default=2000)
    parser.add_argument("--events", type=int, default=300_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    cfg = default_config(k_max=args.k)
    index = enumerate_states(cfg)
    model = build_model(cfg, index)
    tables = SimTables(cfg, index, greedy_policy(cfg, index))
    start_idx = index.position(reference_state(cfg))

    print(f"model: {model.n_states} states, {model.n_rows} rows "
          f"(k_max={args.k}); default backend: {backend_name()}")
    results = {}
    for name, backend in available_backends().items():
        vi_s = bench_vi(backend, model, args.sweeps)
        sim_s, n_events = bench_sim(backend, cfg, tables, start_idx,
                                    args.events, args.seed)
        results[name] = (vi_s, sim_s)
        print(f"{name:>9}: {args.sweeps / vi_s:12.0f} sweeps/s   "
              f"{n_events / sim_s:12.0f} events/s")
    if len(results) == 2:
        py_vi, py_sim = results["python"]
        c_vi, c_sim = results["compiled"]
        print(f"{'speedup':>9}: {py_vi / c_vi:12.1f}x           {py_sim / c_sim:12.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

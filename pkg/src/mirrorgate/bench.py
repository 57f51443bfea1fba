"""Operation-count benchmarks for the per-iteration cost of the sparse engine.

Counters, not wall time, carry the evidence: for an iteration that changes t
coordinates the segment tree is visited at most t * s_m * (1 + ceil(log2 m))
times, against m visits for a baseline that rescans every constraint.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyConstraintRowWarning
from .generate import random_column_sparse_lp
from .prox import make_setup
from .solver import SolverConfig, default_bounds, run


@dataclass
class BenchRow:
    m: int
    n: int
    s_n: int
    s_m: int
    oracle: str
    iterations: int
    mean_tree_visits: float
    mean_column_entries: float
    mean_rows_touched: float
    mean_levels: float
    max_visits_over_bound: float
    scan_visits_per_iter: float
    law_holds: bool
    wall_time: float

    FIELDS = ("m", "n", "s_n", "s_m", "oracle", "iterations", "mean_tree_visits",
              "mean_column_entries", "mean_rows_touched", "mean_levels",
              "max_visits_over_bound", "scan_visits_per_iter", "law_holds", "wall_time")


def tree_bound(t: int, s_m: int, m: int) -> int:
    return t * s_m * (1 + math.ceil(math.log2(m))) if m > 1 else t * s_m


def bench_point(m, n, s_m, iterations=500, oracle="randomized", seed=0, dense_baseline=False):
    """Run the solver for a fixed iteration count and summarize its counters."""
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyConstraintRowWarning)
        problem = random_column_sparse_lp(m, n, s_m, rng)
    setup = make_setup(problem.feasible_set)
    randomize_objective = oracle == "randomized"
    M_f, M_g = default_bounds(problem, setup, oracle, randomize_objective)
    cfg = SolverConfig(eps_g=0.05, M_f=M_f, M_g=M_g, budget=iterations, oracle=oracle,
                       randomize_objective=randomize_objective, seed=seed)
    scan_per_iter = float("nan")
    if dense_baseline:
        scan_cfg = SolverConfig(eps_g=0.05, M_f=M_f, M_g=M_g, budget=iterations, oracle=oracle,
                                randomize_objective=randomize_objective, seed=seed,
                                tracker="scan")
        scan_trace, _ = run(problem, setup, scan_cfg)
        scan_per_iter = scan_trace.cost.tree_visits / iterations
    actual_s_m = problem.A.s_m
    visits, entries, touched = [], [], []
    worst = 0.0

    def hook(k, deltas, cost):
        nonlocal worst
        visits.append(cost.tree_visits)
        entries.append(cost.column_entries)
        touched.append(cost.rows_touched)
        if deltas:
            worst = max(worst, cost.tree_visits / tree_bound(len(deltas), actual_s_m, m))

    start = time.perf_counter()
    run(problem, setup, cfg, step_hook=hook)
    wall = time.perf_counter() - start
    total_rows = sum(touched)
    return BenchRow(
        m=m, n=n, s_n=problem.A.s_n, s_m=actual_s_m, oracle=oracle, iterations=iterations,
        mean_tree_visits=float(np.mean(visits)),
        mean_column_entries=float(np.mean(entries)),
        mean_rows_touched=float(np.mean(touched)),
        mean_levels=sum(visits) / total_rows if total_rows else 0.0,
        max_visits_over_bound=worst,
        scan_visits_per_iter=scan_per_iter,
        law_holds=worst <= 1.0,
        wall_time=wall,
    )


def bench_grid(ms, s_ms, iterations=500, oracle="randomized", seed=0, n_ratio=1.0,
               dense_baseline=False):
    rows = []
    for s_m in s_ms:
        for m in ms:
            n = max(1, int(round(m * n_ratio)))
            rows.append(bench_point(m, n, s_m, iterations, oracle, seed, dense_baseline))
    return rows


def level_increments(rows):
    """Per s_m, the increase of mean tree levels per touched row per doubling of m."""
    out = {}
    by_sm = {}
    for r in rows:
        by_sm.setdefault(r.s_m, []).append(r)
    for s_m, group in by_sm.items():
        group.sort(key=lambda r: r.m)
        out[s_m] = [(b.m, (b.mean_levels - a.mean_levels) / math.log2(b.m / a.m))
                    for a, b in zip(group, group[1:]) if b.m > a.m]
    return out

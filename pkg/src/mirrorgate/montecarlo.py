"""Repeated seeded runs to measure how often the accuracy guarantee fails."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from scipy.stats import binomtest

from .errors import MissingReferenceOptimum
from .problem import eval_constraints_max, eval_objective
from .solver import Status, run

THREADS_ENV = "MIRRORGATE_THREADS"


@dataclass
class RunOutcome:
    run_index: int
    status: Status
    f_excess: float
    g_val: float
    failed: bool


@dataclass
class MonteCarloSummary:
    runs: int
    failures: int
    N: int
    ci_low: float
    ci_high: float
    outcomes: list

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.runs


def _one_run(args):
    problem, setup, cfg, reference, run_index = args
    cfg = replace(cfg, stream=cfg.stream ^ run_index, verbose=False)
    trace, status = run(problem, setup, cfg)
    if status is not Status.OK:
        return RunOutcome(run_index, status, float("inf"), float("inf"), True), trace.N
    f_excess = eval_objective(problem, trace.xbar) - reference
    g_val, _ = eval_constraints_max(problem, trace.xbar)
    failed = f_excess > cfg.target_eps_f or g_val > cfg.eps_g
    return RunOutcome(run_index, status, f_excess, g_val, failed), trace.N


def worker_count(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def monte_carlo(problem, setup, cfg, runs: int, reference, workers=None,
                confidence=0.95) -> MonteCarloSummary:
    """Run ``runs`` independent solves (stream = cfg.stream XOR run index).

    A run fails when f(xbar) - reference > eps_f, g(xbar) > eps_g or it took
    no productive step. The interval is Clopper-Pearson on the failure rate.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if reference is None:
        raise MissingReferenceOptimum("a reference optimal value f* is required")
    jobs = [(problem, setup, cfg, float(reference), r) for r in range(runs)]
    workers = min(worker_count(workers), runs)
    if workers == 1:
        results = [_one_run(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs, chunksize=max(1, runs // (4 * workers))))
    outcomes = sorted((o for o, _ in results), key=lambda o: o.run_index)
    failures = sum(o.failed for o in outcomes)
    ci = binomtest(failures, runs).proportion_ci(confidence_level=confidence, method="exact")
    return MonteCarloSummary(runs, failures, results[0][1], ci.low, ci.high, outcomes)

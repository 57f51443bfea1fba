"""Switching mirror descent for f -> min subject to g <= 0, x in Q.

At iterate x^k the exact value g(x^k) (read off the maintained product state)
decides the branch:

* g(x^k) <= eps_g: productive step along a subgradient of f with h_f, and x^k
  enters the output average;
* otherwise: step along a subgradient of the most violated row l(k) with h_g,
  and hit_counts[l(k)] is incremented.

Step sizes are h_g = eps_g / M_g^2 and h_f = eps_g / (M_f M_g). The output is
the mean of the productive iterates.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingRadiusBound, NoProductiveSteps
from .problem import ExactOracle, Problem
from .prox import ProxSetup, mirror_deltas
from .randomized import RandomizedOracle, Rng
from .sparse import DEFAULT_REFRESH_EVERY, CostCounter, ProductState

DEFAULT_CONSTANT = 81.0
TIGHT_CONSTANT = (4.0 + math.sqrt(18.0)) ** 2

DETERMINISTIC = "deterministic"
STOCHASTIC = "stochastic"
EXPECTATION = "expectation"


class Status(str, enum.Enum):
    OK = "ok"
    NO_PRODUCTIVE_STEPS = "no_productive_steps"


@dataclass
class SolverConfig:
    """Run parameters.

    ``budget`` is "deterministic" (certificate budget, uses Rbar2),
    "stochastic" (high-probability budget with ``sigma`` and
    ``deviation_constant``), "expectation" (needs a user supplied R2) or a
    positive int. ``eps_f=None`` keeps the coupling eps_f = M_f eps_g / M_g.
    """

    eps_g: float
    M_f: float
    M_g: float
    eps_f: float | None = None
    sigma: float = 0.1
    budget: str | int = DETERMINISTIC
    deviation_constant: float = DEFAULT_CONSTANT
    seed: int = 0
    stream: int = 0
    oracle: str = "exact"
    randomize_objective: bool = False
    verbose: bool = False
    record_f: bool = False
    refresh_every: int | None = DEFAULT_REFRESH_EVERY
    tracker: str = "tree"

    def __post_init__(self):
        if not self.eps_g > 0:
            raise ValueError("eps_g must be positive")
        if not (self.M_f > 0 and self.M_g > 0):
            raise ValueError("M_f and M_g must be positive")
        if self.eps_f is not None and not self.eps_f > 0:
            raise ValueError("eps_f must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if isinstance(self.budget, (int, np.integer)) and not isinstance(self.budget, bool):
            if self.budget < 1:
                raise ValueError("a manual budget must be >= 1")
        elif self.budget not in (DETERMINISTIC, STOCHASTIC, EXPECTATION):
            raise ValueError(f"unknown budget mode {self.budget!r}")
        if self.oracle not in ("exact", "randomized"):
            raise ValueError(f"unknown oracle mode {self.oracle!r}")

    @property
    def coupled(self) -> bool:
        return self.eps_f is None

    @property
    def target_eps_f(self) -> float:
        if self.eps_f is None:
            return self.M_f * self.eps_g / self.M_g
        return self.eps_f


@dataclass(frozen=True)
class StepSizes:
    h_f: float
    h_g: float


def step_sizes(cfg: SolverConfig) -> StepSizes:
    h_g = cfg.eps_g / cfg.M_g ** 2
    if cfg.coupled:
        h_f = cfg.eps_g / (cfg.M_f * cfg.M_g)
    else:
        h_f = cfg.eps_f / cfg.M_f ** 2
    return StepSizes(h_f=h_f, h_g=h_g)


def _rate(cfg: SolverConfig) -> float:
    """max(M_g^2/eps_g^2, M_f^2/eps_f^2); equals M_g^2/eps_g^2 when coupled."""
    rate = cfg.M_g ** 2 / cfg.eps_g ** 2
    if not cfg.coupled:
        rate = max(rate, cfg.M_f ** 2 / cfg.eps_f ** 2)
    return rate


def _snap(t: float) -> float:
    """Round t to the nearest integer when decimal inputs put it there up to binary error."""
    r = round(t)
    return float(r) if abs(t - r) <= 1e-12 * max(1.0, abs(t)) else t


def iteration_budget(cfg: SolverConfig, setup: ProxSetup) -> int:
    """Number of iterations N for the configured budget mode."""
    if not isinstance(cfg.budget, str):
        return int(cfg.budget)
    if cfg.budget == EXPECTATION:
        if setup.R2 is None:
            raise MissingRadiusBound("expectation budget needs R2 = V_{x1}(x*)")
        return math.floor(_snap(2.0 * _rate(cfg) * setup.R2)) + 1
    if setup.Rbar2 is None:
        raise MissingRadiusBound("budget needs Rbar2 for this feasible set")
    if cfg.budget == DETERMINISTIC:
        return math.ceil(_snap(2.0 * _rate(cfg) * setup.Rbar2)) + 1
    return max(1, math.ceil(_snap(cfg.deviation_constant * _rate(cfg) * setup.Rbar2
                                  * math.log(1.0 / cfg.sigma))))


class ProductiveAverager:
    """Mean of productive iterates, updated lazily per coordinate.

    For each coordinate j we keep ``acc[j]`` (sum of x_j over productive
    iterates up to the last change of x_j) and ``mark[j]`` (productive count at
    that change). A step then costs O(number of changed coordinates).
    """

    def __init__(self, n: int):
        self.count = 0
        self.acc = [0.0] * n
        self.mark = [0] * n

    def add_current(self):
        self.count += 1

    def before_change(self, x, coords):
        acc, mark, count = self.acc, self.mark, self.count
        for j in coords:
            pending = count - mark[j]
            if pending:
                acc[j] += x[j] * pending
                mark[j] = count

    def add(self, x):
        """Dense variant: count x as one productive iterate."""
        self.count += 1
        acc, mark, count = self.acc, self.mark, self.count
        for j, v in enumerate(x):
            acc[j] += v
            mark[j] = count

    def mean(self, x):
        if self.count == 0:
            raise NoProductiveSteps("no productive iterates to average")
        count = self.count
        return np.array([(a + v * (count - mk)) / count
                         for a, v, mk in zip(self.acc, x, self.mark)])


@dataclass
class IterationRecord:
    k: int
    branch: str
    row: int | None
    g: float
    f: float | None
    n_productive: int


@dataclass
class RunTrace:
    N: int
    n_productive: int
    n_nonproductive: int
    hit_counts: np.ndarray
    xbar: np.ndarray | None
    last_iterate: np.ndarray
    status: Status
    steps: StepSizes
    eps_g: float
    eps_f: float
    log: list = field(default_factory=list)
    cost: CostCounter = field(default_factory=CostCounter)


def make_oracle(problem: Problem, cfg: SolverConfig):
    if cfg.oracle == "randomized":
        return RandomizedOracle(problem, randomize_objective=cfg.randomize_objective)
    return ExactOracle(problem)


def run(problem: Problem, setup: ProxSetup, cfg: SolverConfig, oracle=None,
        callback=None, step_hook=None):
    """Execute exactly N iterations of the switching method.

    ``callback(k, x)`` is invoked with every iterate x^k (a list the caller
    must not mutate); ``step_hook(k, deltas, cost)`` after each update of the
    product state, with that update's CostCounter. Returns ``(trace, status)``; status is
    NO_PRODUCTIVE_STEPS when no iterate satisfied g(x^k) <= eps_g.
    """
    steps = step_sizes(cfg)
    N = iteration_budget(cfg, setup)
    if oracle is None:
        oracle = make_oracle(problem, cfg)
    rng = Rng(cfg.seed, cfg.stream)
    state = ProductState(problem.A, setup.x1, problem.b, problem.sigmas,
                         refresh_every=cfg.refresh_every, tracker=cfg.tracker)
    averager = ProductiveAverager(problem.n)
    hit_counts = [0] * problem.m
    eps_g, h_f, h_g = cfg.eps_g, steps.h_f, steps.h_g
    verbose = cfg.verbose
    log = []
    c_idx, c_val = problem.c_sparse.pairs()

    for k in range(1, N + 1):
        x = state.x
        if callback is not None:
            callback(k, x)
        g, l = state.max_query()
        if g <= eps_g:
            averager.count += 1
            v = oracle.objective_grad(x, rng)
            h = h_f
            if verbose:
                f = _objective_at(problem, x, c_idx, c_val) if cfg.record_f else None
                log.append(IterationRecord(k, "P", None, g, f, averager.count))
        else:
            hit_counts[l] += 1
            v = oracle.constraint_grad(x, l, state.y[l], rng)
            h = h_g
            if verbose:
                f = _objective_at(problem, x, c_idx, c_val) if cfg.record_f else None
                log.append(IterationRecord(k, "N", l, g, f, averager.count))
        deltas = mirror_deltas(setup, x, v, h)
        averager.before_change(x, [j for j, _ in deltas])
        step_cost = state.apply_delta(deltas)
        if step_hook is not None:
            step_hook(k, deltas, step_cost)

    n_prod = averager.count
    status = Status.OK if n_prod >= 1 else Status.NO_PRODUCTIVE_STEPS
    xbar = averager.mean(state.x) if n_prod else None
    trace = RunTrace(
        N=N,
        n_productive=n_prod,
        n_nonproductive=N - n_prod,
        hit_counts=np.array(hit_counts, dtype=np.int64),
        xbar=xbar,
        last_iterate=state.x_array(),
        status=status,
        steps=steps,
        eps_g=cfg.eps_g,
        eps_f=cfg.target_eps_f,
        log=log,
        cost=state.cost,
    )
    return trace, status


def _objective_at(problem, x, c_idx, c_val):
    t = sum(x[j] * v for j, v in zip(c_idx, c_val))
    return problem.outer.value(t) + problem.offset


def average_productive(trace: RunTrace) -> np.ndarray:
    if trace.n_productive < 1 or trace.xbar is None:
        raise NoProductiveSteps("the run took no productive steps")
    return trace.xbar


def default_bounds(problem: Problem, setup: ProxSetup, oracle: str = "exact",
                   randomize_objective: bool = False):
    """(M_f, M_g) implied by the data for the chosen oracle and geometry."""
    if oracle == "randomized":
        return RandomizedOracle(problem, randomize_objective).grad_bounds(setup.dual_norm_ord)
    return ExactOracle(problem).grad_bounds(setup.dual_norm_ord)

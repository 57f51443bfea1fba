"""Dual recovery and duality gap for the output of a deterministic run.

The dual vector is read off the non-productive steps,

    lambda_l = h_g * hit_counts[l] / (h_f * N_I),

and for affine problems over a box, ball or simplex the dual function
phi(lambda) = min_Q c^T x + c0 + sum_l lambda_l (A_l^T x - b_l) has a closed
form, so the gap f(xbar) - phi(lambda) is computed exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoProductiveSteps, UnsupportedProblemClass
from .problem import (Box, EuclideanBall, NonnegativeOrthant, Problem, Simplex,
                      eval_constraints_max, eval_objective)
from .solver import RunTrace, StepSizes


@dataclass
class Certificate:
    xbar: np.ndarray
    lam: np.ndarray
    f_val: float
    g_val: float
    phi_val: float
    gap: float

    @property
    def lambda_nnz(self) -> int:
        return int(np.count_nonzero(self.lam))

    def top_lambda(self, k=10):
        """Largest k entries of lambda as (row, value), ties by row index."""
        nz = np.flatnonzero(self.lam)
        order = sorted(nz.tolist(), key=lambda l: (-self.lam[l], l))[:k]
        return [(l, float(self.lam[l])) for l in order]


def dual_from_trace(trace: RunTrace, steps: StepSizes | None = None) -> np.ndarray:
    if trace.n_productive < 1:
        raise NoProductiveSteps("lambda is undefined without productive steps")
    steps = steps or trace.steps
    return trace.hit_counts * (steps.h_g / (steps.h_f * trace.n_productive))


def dual_value(p: Problem, lam) -> float:
    """phi(lambda) in closed form; -inf on the orthant when unbounded below."""
    if not p.is_affine:
        raise UnsupportedProblemClass("closed-form dual needs affine f and constraints")
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (p.m,):
        raise ValueError(f"lambda has shape {lam.shape}, expected ({p.m},)")
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    w = p.c + p.A.rmatvec(lam)
    const = p.offset - float(lam @ p.b)
    Q = p.feasible_set
    if isinstance(Q, Box):
        return float(np.sum(np.where(w > 0, w * Q.lo, w * Q.hi))) + const
    if isinstance(Q, EuclideanBall):
        return float(w @ Q.center) - Q.radius * float(np.linalg.norm(w)) + const
    if isinstance(Q, Simplex):
        return float(w.min()) + const
    if isinstance(Q, NonnegativeOrthant):
        return const if np.all(w >= 0) else -np.inf
    raise UnsupportedProblemClass(f"no closed-form dual over {type(Q).__name__}")


def duality_gap(p: Problem, xbar, lam) -> Certificate:
    xbar = np.asarray(xbar, dtype=np.float64)
    f_val = eval_objective(p, xbar)
    g_val, _ = eval_constraints_max(p, xbar)
    phi = dual_value(p, lam)
    return Certificate(xbar, np.asarray(lam, dtype=np.float64), f_val, g_val, phi, f_val - phi)


def certify(p: Problem, trace: RunTrace) -> Certificate:
    """Certificate for a finished run (dual recovery + gap)."""
    if trace.xbar is None:
        raise NoProductiveSteps("the run took no productive steps")
    return duality_gap(p, trace.xbar, dual_from_trace(trace))

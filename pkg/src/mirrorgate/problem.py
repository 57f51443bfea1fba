"""Problem definition and exact first-order oracle.

    minimize    f(c^T x) + offset
    subject to  g(x) = max_l  sigma_l(A_l^T x) - b_l  <=  0,    x in Q

The affine case (f and every sigma_l the identity) is the core class: it is the
one for which the dual function has a closed form.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import scalar
from .errors import DimensionMismatch, EmptyConstraintRowWarning, RowOutOfRange
from .scalar import ScalarFunction
from .sparse import SparseMatrix, SparseVector


# Feasible sets

@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box bounds must be 1-d of equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, n, lo, hi):
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @property
    def dim(self):
        return self.lo.size

    def bound_lists(self):
        """(lo, hi) as cached Python lists for scalar loops."""
        cached = self.__dict__.get("_lists")
        if cached is None:
            cached = (self.lo.tolist(), self.hi.tolist())
            object.__setattr__(self, "_lists", cached)
        return cached

    def contains(self, x, tol=1e-12):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


@dataclass(frozen=True)
class EuclideanBall:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1:
            raise DimensionMismatch("ball center must be 1-d")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def contains(self, x, tol=1e-12):
        return bool(np.linalg.norm(np.asarray(x) - self.center) <= self.radius + tol)


@dataclass(frozen=True)
class Simplex:
    """The probability simplex {x >= 0, sum x = 1}."""

    n: int

    @property
    def dim(self):
        return self.n

    def contains(self, x, tol=1e-12):
        x = np.asarray(x)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol * max(1, x.size))


@dataclass(frozen=True)
class NonnegativeOrthant:
    n: int

    @property
    def dim(self):
        return self.n

    def contains(self, x, tol=1e-12):
        return bool(np.all(np.asarray(x) >= -tol))


SetDescriptor = Box | EuclideanBall | Simplex | NonnegativeOrthant


class Problem:
    """Immutable problem instance. Build it with :func:`build_problem`."""

    def __init__(self, c, offset, outer, A, b, sigmas, feasible_set):
        self.c = c
        self.c_sparse = SparseVector.from_dense(c)
        self.offset = float(offset)
        self.outer = outer
        self.A = A
        self.b = b
        self.sigmas = sigmas
        self.feasible_set = feasible_set
        self._rows = [A.row(l) for l in range(A.m)]

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def is_affine(self) -> bool:
        return self.outer.is_linear and self.sigmas is None

    def row(self, l: int) -> SparseVector:
        if not 0 <= l < self.m:
            raise RowOutOfRange(f"constraint row {l} outside [0, {self.m})")
        return self._rows[l]

    def sigma(self, l: int) -> ScalarFunction:
        return scalar.LINEAR if self.sigmas is None else self.sigmas[l]

    def lipschitz_sigma(self) -> float:
        """Uniform Lipschitz bound M over all sigma_l."""
        if self.sigmas is None:
            return 1.0
        return scalar.lipschitz_bound(self.sigmas)

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_rows"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._rows = [self.A.row(l) for l in range(self.A.m)]

    def __repr__(self):
        return (f"Problem(n={self.n}, m={self.m}, nnz={self.A.nnz}, "
                f"set={type(self.feasible_set).__name__}, affine={self.is_affine})")


def _as_matrix(matrix, m, n) -> SparseMatrix:
    if isinstance(matrix, SparseMatrix):
        A = matrix
    elif isinstance(matrix, tuple) and len(matrix) == 3:
        rows, cols, vals = (np.asarray(a) for a in matrix)
        if rows.size and (rows.min() < 0 or rows.max() >= m):
            raise DimensionMismatch(f"matrix row index outside [0, {m})")
        if cols.size and (cols.min() < 0 or cols.max() >= n):
            raise DimensionMismatch(
                f"matrix row references column {int(cols.max())} in an n={n} problem")
        A = SparseMatrix.from_triplets(rows, cols, vals, (m, n))
    else:
        A = SparseMatrix.from_dense(matrix)
    if A.shape != (m, n):
        raise DimensionMismatch(f"matrix is {A.m}x{A.n}, expected {m}x{n}")
    return A


def build_problem(*, n, m, c, matrix, b, feasible_set, offset=0.0,
                  objective: ScalarFunction | None = None, sigmas=None) -> Problem:
    """Validate inputs and assemble a :class:`Problem`.

    ``matrix`` may be a SparseMatrix, a dense (m, n) array or 0-based
    (rows, cols, vals) triplets. ``sigmas`` is None (all linear) or a list of
    m scalar functions; ``objective`` is the outer function f (default linear).
    Scalar functions may also be given by tag ("linear", "abs", "pos").
    """
    if isinstance(objective, str):
        objective = scalar.from_tag(objective)
    if n < 1 or m < 1:
        raise DimensionMismatch("need n >= 1 and m >= 1")
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (n,):
        raise DimensionMismatch(f"c has shape {c.shape}, expected ({n},)")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (m,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({m},)")
    if feasible_set.dim != n:
        raise DimensionMismatch(f"feasible set has dimension {feasible_set.dim}, expected {n}")
    A = _as_matrix(matrix, m, n)
    if sigmas is not None:
        sigmas = [scalar.from_tag(s) if isinstance(s, str) else s for s in sigmas]
        if len(sigmas) != m:
            raise DimensionMismatch(f"{len(sigmas)} sigmas for {m} rows")
        if all(s.is_linear for s in sigmas):
            sigmas = None
    empty = np.flatnonzero(A.row_nnz() == 0)
    if empty.size:
        warnings.warn(f"constraint rows {empty.tolist()[:10]} are empty and act as constants",
                      EmptyConstraintRowWarning, stacklevel=2)
    c.setflags(write=False)
    b.setflags(write=False)
    return Problem(c, offset, objective or scalar.LINEAR, A, b, sigmas, feasible_set)


def eval_objective(p: Problem, x) -> float:
    return p.outer.value(p.c_sparse.dot(x)) + p.offset


def constraint_values(p: Problem, x, products=None) -> np.ndarray:
    """Vector of g_l(x); ``products`` may supply precomputed A x."""
    y = p.A.matvec(x) if products is None else np.asarray(products, dtype=np.float64)
    if p.sigmas is None:
        return y - p.b
    return np.array([s.value(t) for s, t in zip(p.sigmas, y)]) - p.b


def eval_constraints_max(p: Problem, x, products=None):
    """Return (g(x), l) with l the smallest index attaining the max."""
    g = constraint_values(p, x, products)
    l = int(np.argmax(g))
    return float(g[l]), l


def subgradient_objective(p: Problem, x) -> SparseVector:
    if p.outer.is_linear:
        return p.c_sparse
    return p.c_sparse.scaled(p.outer.derivative(p.c_sparse.dot(x)))


def subgradient_constraint(p: Problem, x, l: int) -> SparseVector:
    row = p.row(l)
    sigma = p.sigma(l)
    if sigma.is_linear:
        return row
    return row.scaled(sigma.derivative(row.dot(x)))


def outer_lipschitz(problem) -> float:
    lip = problem.outer.lipschitz
    if lip is None:
        raise ValueError("objective outer function has no global Lipschitz constant; supply M_f")
    return float(lip)


class ExactOracle:
    """Deterministic oracle returning the exact subgradients."""

    randomized = False

    def __init__(self, problem):
        self.problem = problem

    def objective_grad(self, x, rng=None) -> SparseVector:
        p = self.problem
        c = p.c_sparse
        if p.outer.is_linear:
            return c
        idx, val = c.pairs()
        return c.scaled(p.outer.derivative(sum(x[j] * v for j, v in zip(idx, val))))

    def constraint_grad(self, x, l: int, y_l: float, rng=None) -> SparseVector:
        row = self.problem.row(l)
        sigma = self.problem.sigma(l)
        if sigma.is_linear:
            return row
        return row.scaled(sigma.derivative(y_l))

    def grad_bounds(self, ord=2):
        p = self.problem
        M = p.lipschitz_sigma()
        Mg = M * float(np.max(p.A.row_norms(ord)))
        return outer_lipschitz(p) * p.c_sparse.norm(ord), Mg

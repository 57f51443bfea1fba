"""Random instance generators and the shipped 2-variable demo problem."""
from __future__ import annotations

import numpy as np

from .problem import Box, Problem, build_problem
from .sparse import SparseMatrix


def random_sparse_matrix(m, n, rng, row_nnz=None, col_nnz=None, normalize=None):
    """m x n matrix with exactly ``row_nnz`` nonzeros per row or ``col_nnz`` per column.

    Values are standard normal. ``normalize`` in {None, 1, 2} rescales every
    nonempty row to unit l1 or l2 norm.
    """
    if (row_nnz is None) == (col_nnz is None):
        raise ValueError("give exactly one of row_nnz and col_nnz")
    if row_nnz is not None:
        if row_nnz > n:
            raise ValueError("row_nnz exceeds n")
        rows = np.repeat(np.arange(m), row_nnz)
        cols = np.concatenate([rng.choice(n, size=row_nnz, replace=False) for _ in range(m)])
    else:
        if col_nnz > m:
            raise ValueError("col_nnz exceeds m")
        cols = np.repeat(np.arange(n), col_nnz)
        rows = np.concatenate([rng.choice(m, size=col_nnz, replace=False) for _ in range(n)])
    vals = rng.standard_normal(rows.size)
    vals[vals == 0.0] = 1.0
    A = SparseMatrix.from_triplets(rows, cols, vals, (m, n))
    if normalize is not None:
        norms = A.row_norms(normalize)
        scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        A = SparseMatrix(A.csr.multiply(scale[:, None]).tocsr())
    return A


def random_box_lp(n=10, m=20, row_nnz=3, rng=None, lo=0.0, hi=1.0,
                  slack=(0.02, 0.2), normalize=2) -> Problem:
    """Feasible box LP  min c^T x  s.t.  A x <= b,  lo <= x <= hi.

    b is set from an interior point x0 plus a positive slack, so Slater's
    condition holds. c points away from x0 so several constraints are active
    at the optimum.
    """
    rng = np.random.default_rng(rng)
    A = random_sparse_matrix(m, n, rng, row_nnz=row_nnz, normalize=normalize)
    x0 = lo + (hi - lo) * rng.uniform(0.3, 0.7, size=n)
    b = A.matvec(x0) + rng.uniform(*slack, size=m)
    c = rng.standard_normal(n)
    return build_problem(n=n, m=m, c=c, matrix=A, b=b,
                         feasible_set=Box.uniform(n, lo, hi))


def two_var_problem() -> Problem:
    """min x1 + x2 over [0, 2]^2 subject to 1 - x1 <= 0; optimum 1 at (1, 0)."""
    return build_problem(n=2, m=1, c=[1.0, 1.0], matrix=[[-1.0, 0.0]], b=[-1.0],
                         feasible_set=Box.uniform(2, 0.0, 2.0))


def random_column_sparse_lp(m, n, col_nnz, rng=None, lo=0.0, hi=1.0) -> Problem:
    """Large box LP with exactly ``col_nnz`` nonzeros per column (bench instances)."""
    rng = np.random.default_rng(rng)
    A = random_sparse_matrix(m, n, rng, col_nnz=col_nnz)
    x0 = np.full(n, 0.5 * (lo + hi))
    b = A.matvec(x0) + rng.uniform(0.0, 0.1, size=m)
    c = rng.standard_normal(n)
    return build_problem(n=n, m=m, c=c, matrix=A, b=b,
                         feasible_set=Box.uniform(n, lo, hi))

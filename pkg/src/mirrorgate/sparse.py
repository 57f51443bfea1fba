"""Sparse storage and incrementally maintained row products.

The matrix is kept twice: CSR for row access (constraint subgradients) and
CSC for column access (propagating a change of one coordinate of x to every
row product it enters). ``ProductState`` keeps y = A x together with a max
segment tree over the constraint values, so a t-coordinate change of x costs
at most t * s_m * (1 + ceil(log2 m)) tree-node visits.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CoordOutOfRange, DimensionMismatch, IndexOutOfRange, ParseError
from .scalar import ScalarFunction


@dataclass(frozen=True)
class SparseVector:
    """Index/value pairs with strictly increasing 0-based indices and no zeros."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise DimensionMismatch("indices and values must be 1-d of equal length")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def build(cls, indices, values) -> "SparseVector":
        """Normalize arbitrary pairs: sort, sum duplicates, drop zeros."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        val = np.asarray(values, dtype=np.float64).ravel()
        if idx.size:
            uniq, inverse = np.unique(idx, return_inverse=True)
            summed = np.zeros(uniq.size)
            np.add.at(summed, inverse, val)
            keep = summed != 0.0
            idx, val = uniq[keep], summed[keep]
        return cls(idx, val)

    @classmethod
    def _trusted(cls, idx: list, val: list) -> "SparseVector":
        """Skip validation for callers that guarantee the invariants."""
        out = object.__new__(cls)
        object.__setattr__(out, "indices", np.array(idx, dtype=np.int64))
        object.__setattr__(out, "values", np.array(val, dtype=np.float64))
        object.__setattr__(out, "_pairs", (idx, val))
        return out

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz])

    @classmethod
    def zeros(cls) -> "SparseVector":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.indices] = self.values
        return out

    def dot(self, x) -> float:
        return float(np.dot(self.values, np.asarray(x)[self.indices]))

    def scaled(self, alpha: float) -> "SparseVector":
        if alpha == 0.0:
            return SparseVector.zeros()
        return SparseVector(self.indices, self.values * alpha)

    def pairs(self):
        """(indices, values) as cached Python lists for scalar loops."""
        cached = self.__dict__.get("_pairs")
        if cached is None:
            cached = (self.indices.tolist(), self.values.tolist())
            object.__setattr__(self, "_pairs", cached)
        return cached

    def norm(self, ord=2) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.linalg.norm(self.values, ord))


class SparseMatrix:
    """An m x n matrix held in both CSR and CSC form.

    Indices are 0-based. Duplicated triplets are summed and explicit zeros are
    dropped, so ``s_n``/``s_m`` count structural nonzeros only.
    """

    def __init__(self, csr: sp.csr_matrix):
        csr = sp.csr_matrix(csr, dtype=np.float64)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        self.csr = csr
        self.csc = csr.tocsc()
        self.csc.sort_indices()
        self.m, self.n = csr.shape
        row_nnz = np.diff(csr.indptr)
        col_nnz = np.diff(self.csc.indptr)
        self.s_n = int(row_nnz.max()) if row_nnz.size else 0
        self.s_m = int(col_nnz.max()) if col_nnz.size else 0
        self._columns = None
        self._rows = None

    @classmethod
    def from_triplets(cls, rows, cols, vals, shape) -> "SparseMatrix":
        m, n = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise DimensionMismatch("triplet arrays differ in length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= m:
                raise IndexOutOfRange(f"row index outside [0, {m})")
            if cols.min() < 0 or cols.max() >= n:
                raise IndexOutOfRange(f"column index outside [0, {n})")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr())

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def row(self, l: int) -> SparseVector:
        lo, hi = self.csr.indptr[l], self.csr.indptr[l + 1]
        return SparseVector(self.csr.indices[lo:hi], self.csr.data[lo:hi])

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def row_norms(self, ord=2) -> np.ndarray:
        out = np.zeros(self.m)
        for l in range(self.m):
            lo, hi = self.csr.indptr[l], self.csr.indptr[l + 1]
            if hi > lo:
                out[l] = np.linalg.norm(self.csr.data[lo:hi], ord)
        return out

    def matvec(self, x) -> np.ndarray:
        return self.csr @ np.asarray(x, dtype=np.float64)

    def rmatvec(self, y) -> np.ndarray:
        return self.csr.T @ np.asarray(y, dtype=np.float64)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def triplets(self):
        coo = self.csr.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def columns(self):
        """Per-column (rows, values) as Python lists, built once for scalar loops."""
        if self._columns is None:
            ptr, idx, dat = self.csc.indptr, self.csc.indices, self.csc.data
            self._columns = [
                (idx[ptr[j]:ptr[j + 1]].tolist(), dat[ptr[j]:ptr[j + 1]].tolist())
                for j in range(self.n)
            ]
        return self._columns

    def rows(self):
        """Per-row (cols, values) as Python lists."""
        if self._rows is None:
            ptr, idx, dat = self.csr.indptr, self.csr.indices, self.csr.data
            self._rows = [
                (idx[ptr[l]:ptr[l + 1]].tolist(), dat[ptr[l]:ptr[l + 1]].tolist())
                for l in range(self.m)
            ]
        return self._rows

    def is_consistent(self) -> bool:
        """CSR and CSC describe the same matrix with sorted indices."""
        back = self.csc.tocsr()
        back.sort_indices()
        return (
            back.shape == self.csr.shape
            and np.array_equal(back.indptr, self.csr.indptr)
            and np.array_equal(back.indices, self.csr.indices)
            and np.array_equal(back.data, self.csr.data)
        )

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_columns"] = None
        state["_rows"] = None
        return state

    def __repr__(self):
        return f"SparseMatrix(m={self.m}, n={self.n}, nnz={self.nnz}, s_n={self.s_n}, s_m={self.s_m})"


class MaxSegmentTree:
    """Array-backed segment tree holding (max value, smallest argmax).

    Leaves live at ``size + i`` where ``size`` is the next power of two >= the
    number of items; padding leaves hold -inf. ``update`` returns the number
    of nodes it touched (the leaf plus every ancestor).
    """

    def __init__(self, values):
        values = [float(v) for v in values]
        self.n_items = len(values)
        size = 1
        while size < max(self.n_items, 1):
            size *= 2
        self.size = size
        self.depth = size.bit_length() - 1
        self.val = [-math.inf] * (2 * size)
        self.arg = [0] * (2 * size)
        self.rebuild(values)

    def rebuild(self, values):
        size, val, arg = self.size, self.val, self.arg
        for i in range(size):
            val[size + i] = values[i] if i < self.n_items else -math.inf
            arg[size + i] = i
        for node in range(size - 1, 0, -1):
            lo, hi = 2 * node, 2 * node + 1
            if val[lo] >= val[hi]:
                val[node], arg[node] = val[lo], arg[lo]
            else:
                val[node], arg[node] = val[hi], arg[hi]

    def update(self, i: int, value: float) -> int:
        val, arg = self.val, self.arg
        node = self.size + i
        val[node] = value
        node >>= 1
        while node:
            lo = node << 1
            a, b = val[lo], val[lo + 1]
            if a >= b:
                val[node] = a
                arg[node] = arg[lo]
            else:
                val[node] = b
                arg[node] = arg[lo + 1]
            node >>= 1
        return self.depth + 1

    def leaf(self, i: int) -> float:
        return self.val[self.size + i]

    def max(self):
        """Return (max value, smallest index attaining it)."""
        return self.val[1], self.arg[1]


@dataclass
class CostCounter:
    tree_visits: int = 0
    column_entries: int = 0
    coordinate_updates: int = 0
    rows_touched: int = 0
    refreshes: int = 0

    def add(self, other: "CostCounter"):
        self.tree_visits += other.tree_visits
        self.column_entries += other.column_entries
        self.coordinate_updates += other.coordinate_updates
        self.rows_touched += other.rows_touched
        self.refreshes += other.refreshes


DEFAULT_REFRESH_EVERY = 10**6


class ProductState:
    """Current iterate x, products y = A x and a max tracker over g_l.

    g_l = sigma_l(y_l) - b_l. ``sigmas=None`` means every sigma is linear.
    The state owns its copy of x; callers change x only through
    :meth:`apply_delta`.

    ``tracker="scan"`` replaces the segment tree by a plain array whose max is
    found by a linear scan on every query (m visits); it is the baseline the
    tree is measured against.
    """

    def __init__(self, A: SparseMatrix, x, offsets=None, sigmas=None,
                 refresh_every: int | None = DEFAULT_REFRESH_EVERY, tracker="tree"):
        if tracker not in ("tree", "scan"):
            raise ValueError(f"unknown tracker {tracker!r}")
        self.tracker = tracker
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (A.n,):
            raise DimensionMismatch(f"x has shape {x.shape}, expected ({A.n},)")
        self.A = A
        self.b = [0.0] * A.m if offsets is None else [float(v) for v in offsets]
        if len(self.b) != A.m:
            raise DimensionMismatch("offsets length differs from row count")
        if sigmas is not None and all(s.is_linear for s in sigmas):
            sigmas = None
        self.sigmas = sigmas
        self.refresh_every = refresh_every
        self.cost = CostCounter()
        self._since_refresh = 0
        self._columns = A.columns()
        self.x = x.tolist()
        self._init_products()

    def _g(self, l: int, y_l: float) -> float:
        if self.sigmas is None:
            return y_l - self.b[l]
        return self.sigmas[l].value(y_l) - self.b[l]

    def _init_products(self):
        self.y = self.A.matvec(np.asarray(self.x)).tolist()
        gvals = [self._g(l, self.y[l]) for l in range(self.A.m)]
        if self.tracker == "tree":
            self.tree = MaxSegmentTree(gvals)
            self.gvals = None
        else:
            self.tree = None
            self.gvals = gvals
        self._since_refresh = 0

    @property
    def m(self):
        return self.A.m

    @property
    def n(self):
        return self.A.n

    def x_array(self) -> np.ndarray:
        return np.array(self.x)

    def y_array(self) -> np.ndarray:
        return np.array(self.y)

    def constraint_values(self) -> np.ndarray:
        if self.tree is None:
            return np.array(self.gvals)
        return np.array([self.tree.leaf(l) for l in range(self.A.m)])

    def apply_delta(self, deltas) -> CostCounter:
        """Set x_j to new values and propagate to y and the tree.

        ``deltas`` is an iterable of (j, new_value). Returns the cost of this
        call; the running total is kept in ``self.cost``.
        """
        x, y, columns = self.x, self.y, self._columns
        n = len(x)
        touched = {}
        entries = 0
        updates = 0
        for j, new in deltas:
            if not 0 <= j < n:
                raise CoordOutOfRange(f"coordinate {j} outside [0, {n})")
            diff = new - x[j]
            x[j] = new
            updates += 1
            if diff == 0.0:
                continue
            rows, vals = columns[j]
            for r, a in zip(rows, vals):
                y[r] += a * diff
                touched[r] = None
            entries += len(rows)
        visits = 0
        tree = self.tree
        if tree is None:
            for r in touched:
                self.gvals[r] = self._g(r, y[r])
        elif self.sigmas is None:
            # inlined MaxSegmentTree.update
            b = self.b
            val, arg, size = tree.val, tree.arg, tree.size
            for r in touched:
                node = size + r
                val[node] = y[r] - b[r]
                node >>= 1
                while node:
                    lo = node << 1
                    a, c = val[lo], val[lo + 1]
                    if a >= c:
                        val[node] = a
                        arg[node] = arg[lo]
                    else:
                        val[node] = c
                        arg[node] = arg[lo + 1]
                    node >>= 1
            visits = len(touched) * (tree.depth + 1)
        else:
            for r in touched:
                visits += tree.update(r, self._g(r, y[r]))
        step = CostCounter(visits, entries, updates, len(touched), 0)
        self._since_refresh += updates
        if self.refresh_every and self._since_refresh >= self.refresh_every:
            self._init_products()
            step.refreshes = 1
        self.cost.add(step)
        return step

    def max_query(self):
        """Return (max_l g_l, smallest maximizing row)."""
        if self.tree is not None:
            return self.tree.max()
        best, arg = -math.inf, 0
        for l, v in enumerate(self.gvals):
            if v > best:
                best, arg = v, l
        self.cost.tree_visits += len(self.gvals)
        return best, arg

    def refresh(self):
        """Rebuild y and the tree from x, discarding accumulated drift."""
        self._init_products()
        self.cost.refreshes += 1


def init_products(A: SparseMatrix, x, offsets=None, sigmas=None, **kwargs) -> ProductState:
    return ProductState(A, x, offsets, sigmas, **kwargs)


def apply_delta(state: ProductState, deltas) -> CostCounter:
    return state.apply_delta(deltas)


def max_query(state: ProductState):
    return state.max_query()


def recompute_full(state: ProductState) -> ProductState:
    """A fresh state built from scratch at the same x (drift/test oracle)."""
    return ProductState(state.A, state.x_array(), state.b, state.sigmas,
                        refresh_every=state.refresh_every, tracker=state.tracker)


# Matrix Market (coordinate, real, general), 1-based on disk.

MM_BANNER = "%%MatrixMarket matrix coordinate real general"


def parse_matrix_market(numbered_lines, shape=None):
    """Parse a coordinate block from an iterator of (lineno, text) pairs.

    Returns a SparseMatrix. ``shape`` (m, n), when given, must agree with the
    size line. Errors carry the offending line number.
    """
    it = iter(numbered_lines)
    last = 0
    banner_seen = False
    size = None
    for lineno, text in it:
        last = lineno
        s = text.strip()
        if not banner_seen:
            if not s.lower().startswith("%%matrixmarket"):
                raise ParseError("expected Matrix Market banner", lineno)
            parts = s.split()
            if len(parts) < 5 or [p.lower() for p in parts[1:4]] != ["matrix", "coordinate", "real"]:
                raise ParseError("only 'matrix coordinate real general' is supported", lineno)
            if parts[4].lower() != "general":
                raise ParseError(f"unsupported symmetry {parts[4]!r}", lineno)
            banner_seen = True
            continue
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise ParseError("size line must be 'rows cols nnz'", lineno)
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise ParseError("size line must hold integers", lineno) from None
        break
    if not banner_seen:
        raise ParseError("missing Matrix Market block", last + 1)
    if size is None:
        raise ParseError("missing Matrix Market size line", last + 1)
    m, n, nnz = size
    if shape is not None and (m, n) != tuple(shape):
        raise DimensionMismatch(f"line {last}: matrix is {m}x{n}, header says {shape[0]}x{shape[1]}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    k = 0
    for lineno, text in it:
        last = lineno
        s = text.strip()
        if not s or s.startswith("%"):
            continue
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", lineno)
        parts = s.split()
        if len(parts) != 3:
            raise ParseError("entry must be 'row col value'", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad entry {s!r}", lineno) from None
        if not 1 <= i <= m:
            raise DimensionMismatch(f"line {lineno}: row {i} outside 1..{m}")
        if not 1 <= j <= n:
            raise DimensionMismatch(f"line {lineno}: column {j} outside 1..{n}")
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k < nnz:
        raise ParseError(f"matrix section truncated: declared {nnz} entries, found {k}", last)
    return SparseMatrix.from_triplets(rows, cols, vals, (m, n))


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def matrix_market_lines(A: SparseMatrix):
    rows, cols, vals = A.triplets()
    yield MM_BANNER
    yield f"{A.m} {A.n} {rows.size}"
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        yield f"{i + 1} {j + 1} {format_float(v)}"


def read_matrix_market(path) -> SparseMatrix:
    with open(path) as fh:
        return parse_matrix_market(enumerate(fh, start=1))


def write_matrix_market(A: SparseMatrix, path):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        for line in matrix_market_lines(A):
            fh.write(line + "\n")
    os.replace(tmp, path)

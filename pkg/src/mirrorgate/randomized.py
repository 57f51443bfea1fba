"""Randomized 2-sparse subgradients for rows (and optionally the objective).

A row a = a+ - a- is split into nonnegative parts. A stochastic subgradient of
sigma(a^T x) is

    sigma'(a^T x) * (||a+||_1 e_i - ||a-||_1 e_j),

with i drawn proportionally to a+ and j proportionally to a-, independently.
Its expectation is sigma'(a^T x) * a. Draws use Fenwick trees over the row
support, so one draw costs O(log nnz(a)).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights, RowOutOfRange
from .problem import outer_lipschitz
from .sparse import SparseVector

_BLOCK = 1024
_MASK64 = (1 << 64) - 1


class Rng:
    """Counter-based uniform stream (Philox 4x64) with a stream-split rule.

    The Philox key is ``seed | (stream << 64)`` where ``stream`` is the run
    index XORed into the base stream id. Uniforms are drawn in blocks of 1024
    doubles with 53 random bits each; the sequence does not depend on how
    the caller interleaves draws.
    """

    def __init__(self, seed: int = 0, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))
        self._buf: list = []
        self._pos = 0

    def spawn(self, run_index: int) -> "Rng":
        return Rng(self.seed, self.stream ^ int(run_index))

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniforms(self, size: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(size)]) if size < 64 else self._bulk(size)

    def _bulk(self, size):
        head = self._buf[self._pos:]
        take = min(len(head), size)
        self._pos += take
        rest = size - take
        tail = self._gen.random(rest) if rest else np.zeros(0)
        return np.concatenate([np.array(head[:take]), tail])


class FenwickSampler:
    """Draws index k of ``support`` with probability weights[k] / total."""

    def __init__(self, support, weights):
        support = np.asarray(support, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if support.shape != weights.shape:
            raise ValueError("support and weights differ in length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(weights > 0):
            raise AllZeroWeights("cannot sample from all-zero weights")
        self.support = support
        self.weights = weights
        size = weights.size
        tree = [0.0] * (size + 1)
        for i, w in enumerate(weights.tolist(), start=1):
            tree[i] += w
            parent = i + (i & -i)
            if parent <= size:
                tree[parent] += tree[i]
        self._tree = tree
        self._size = size
        self._top = 1 << (size.bit_length() - 1)
        self._support_list = support.tolist()
        self._last_positive = int(np.flatnonzero(weights > 0)[-1])
        self.total = self.prefix(size)

    def __len__(self):
        return self._size

    def prefix(self, k: int) -> float:
        """Sum of the first k weights."""
        s = 0.0
        while k > 0:
            s += self._tree[k]
            k -= k & -k
        return s

    def find(self, threshold: float) -> int:
        """Smallest position k (0-based) with prefix(k + 1) > threshold."""
        tree, size = self._tree, self._size
        pos = 0
        rem = threshold
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= size and tree[nxt] <= rem:
                pos = nxt
                rem -= tree[nxt]
            step >>= 1
        if pos >= size or self.weights[pos] == 0.0:
            # threshold rounded onto/after the last boundary
            pos = min(pos, self._last_positive)
            while self.weights[pos] == 0.0:
                pos -= 1
        return pos

    def sample(self, rng: Rng) -> int:
        return self._support_list[self.find(rng.uniform() * self.total)]

    def find_batch(self, thresholds) -> np.ndarray:
        """Vectorized :meth:`find` over an array of thresholds."""
        tree = np.asarray(self._tree)
        rem = np.array(thresholds, dtype=np.float64)
        pos = np.zeros(rem.shape, dtype=np.int64)
        step = self._top
        while step:
            nxt = pos + step
            ok = nxt <= self._size
            vals = np.where(ok, tree[np.minimum(nxt, self._size)], np.inf)
            move = vals <= rem
            pos = np.where(move, nxt, pos)
            rem = np.where(move, rem - vals, rem)
            step >>= 1
        bad = (pos >= self._size)
        if np.any(bad):
            pos[bad] = self._last_positive
        bad = self.weights[pos] == 0.0
        for k in np.flatnonzero(bad):
            p = int(pos[k])
            while self.weights[p] == 0.0:
                p -= 1
            pos[k] = p
        return pos

    def sample_batch(self, uniforms) -> np.ndarray:
        return self.support[self.find_batch(np.asarray(uniforms) * self.total)]

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()


def build_sampler(weights) -> FenwickSampler:
    """Sampler over a nonnegative SparseVector or dense weight array."""
    if isinstance(weights, SparseVector):
        return FenwickSampler(weights.indices, weights.values)
    w = np.asarray(weights, dtype=np.float64)
    return FenwickSampler(np.arange(w.size), w)


def sample(sampler: FenwickSampler, rng: Rng) -> int:
    return sampler.sample(rng)


def decompose_pos_neg(row: SparseVector):
    """Split a row into (pos, neg, ||pos||_1, ||neg||_1) with row = pos - neg."""
    vals = row.values
    keep_pos = vals > 0
    keep_neg = vals < 0
    pos = SparseVector(row.indices[keep_pos], vals[keep_pos])
    neg = SparseVector(row.indices[keep_neg], -vals[keep_neg])
    return pos, neg, float(pos.values.sum()), float(neg.values.sum())


@dataclass(frozen=True)
class RowSampler:
    row: SparseVector
    pos_norm: float
    neg_norm: float
    pos: FenwickSampler | None
    neg: FenwickSampler | None

    @classmethod
    def from_row(cls, row: SparseVector) -> "RowSampler":
        pos, neg, pn, nn = decompose_pos_neg(row)
        return cls(row, pn, nn,
                   build_sampler(pos) if pos.nnz else None,
                   build_sampler(neg) if neg.nnz else None)

    @property
    def l1_norm(self) -> float:
        return self.pos_norm + self.neg_norm


def stochastic_constraint_grad(sampler: RowSampler, sigma_prime: float, rng: Rng) -> SparseVector:
    """One realization of the 2-sparse unbiased subgradient."""
    if sigma_prime == 0.0:
        return SparseVector.zeros()
    idx = []
    val = []
    if sampler.pos is not None:
        idx.append(sampler.pos.sample(rng))
        val.append(sampler.pos_norm * sigma_prime)
    if sampler.neg is not None:
        idx.append(sampler.neg.sample(rng))
        val.append(-sampler.neg_norm * sigma_prime)
    if len(idx) == 2 and idx[0] > idx[1]:
        idx.reverse()
        val.reverse()
    if len(idx) == 2 and idx[0] == idx[1]:
        return SparseVector.build(idx, val)
    return SparseVector._trusted(idx, val)


def stochastic_constraint_grad_batch(sampler: RowSampler, sigma_prime: float, rng: Rng, size: int):
    """``size`` realizations as (i, value_i, j, value_j) arrays.

    Missing sides use index -1 and value 0. Draw order matches repeated calls
    of :func:`stochastic_constraint_grad` only in distribution, not sample by
    sample.
    """
    minus = np.full(size, -1, dtype=np.int64)
    zero = np.zeros(size)
    i, vi, j, vj = minus, zero, minus.copy(), zero.copy()
    if sigma_prime == 0.0:
        return i, vi, j, vj
    if sampler.pos is not None:
        i = sampler.pos.sample_batch(rng.uniforms(size))
        vi = np.full(size, sampler.pos_norm * sigma_prime)
    if sampler.neg is not None:
        j = sampler.neg.sample_batch(rng.uniforms(size))
        vj = np.full(size, -sampler.neg_norm * sigma_prime)
    return i, vi, j, vj


def expected_grad_enumeration(sampler: RowSampler, sigma_prime: float, n: int) -> np.ndarray:
    """Exact expectation of the estimator by enumerating every (i, j) outcome."""
    pos_out = [(None, 1.0)]
    neg_out = [(None, 1.0)]
    if sampler.pos is not None:
        pos_out = list(zip(sampler.pos.support.tolist(), sampler.pos.probabilities().tolist()))
    if sampler.neg is not None:
        neg_out = list(zip(sampler.neg.support.tolist(), sampler.neg.probabilities().tolist()))
    expected = np.zeros(n)
    for (i, p), (j, q) in itertools.product(pos_out, neg_out):
        weight = p * q
        if i is not None:
            expected[i] += weight * sampler.pos_norm * sigma_prime
        if j is not None:
            expected[j] -= weight * sampler.neg_norm * sigma_prime
    return expected


class RandomizedOracle:
    """Stochastic oracle over a Problem; row samplers are built on first use.

    Constraint subgradients are always randomized. The objective is randomized
    only when ``randomize_objective`` is set; otherwise its exact gradient is
    returned.
    """

    randomized = True

    def __init__(self, problem, randomize_objective: bool = False):
        self.problem = problem
        self.randomize_objective = randomize_objective
        self._samplers: dict = {}
        self._objective_sampler = None
        c = problem.c_sparse
        if randomize_objective and c.nnz:
            self._objective_sampler = RowSampler.from_row(c)

    def row_sampler(self, l: int) -> RowSampler:
        hit = self._samplers.get(l)
        if hit is None:
            if not 0 <= l < self.problem.m:
                raise RowOutOfRange(f"row {l} outside [0, {self.problem.m})")
            hit = RowSampler.from_row(self.problem.row(l))
            self._samplers[l] = hit
        return hit

    @property
    def samplers_built(self) -> int:
        return len(self._samplers)

    def objective_grad(self, x, rng: Rng) -> SparseVector:
        p = self.problem
        c = p.c_sparse
        if p.outer.is_linear:
            scale = 1.0
        else:
            idx, val = c.pairs()
            scale = p.outer.derivative(sum(x[j] * v for j, v in zip(idx, val)))
        if self._objective_sampler is None:
            return c if scale == 1.0 else c.scaled(scale)
        return stochastic_constraint_grad(self._objective_sampler, scale, rng)

    def constraint_grad(self, x, l: int, y_l: float, rng: Rng) -> SparseVector:
        if self.problem.row(l).nnz == 0:
            return SparseVector.zeros()
        return stochastic_constraint_grad(self.row_sampler(l),
                                          self.problem.sigma(l).derivative(y_l), rng)

    def grad_bounds(self, ord=2):
        """(M_f, M_g) bounding realized subgradient dual norms."""
        p = self.problem
        M = p.lipschitz_sigma()
        Mg = M * float(np.max(p.A.row_norms(1)))
        c_norm = p.c_sparse.norm(1) if self.randomize_objective else p.c_sparse.norm(ord)
        return outer_lipschitz(p) * c_norm, Mg

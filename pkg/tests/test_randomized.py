import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mirrorgate.errors import AllZeroWeights
from mirrorgate.generate import random_sparse_matrix
from mirrorgate.problem import Box, build_problem
from mirrorgate.randomized import (RandomizedOracle, RowSampler, Rng, build_sampler,
                                   decompose_pos_neg, expected_grad_enumeration, sample,
                                   stochastic_constraint_grad, stochastic_constraint_grad_batch)
from mirrorgate.sparse import SparseVector


class FixedRng:
    def __init__(self, values):
        self.values = list(values)

    def uniform(self):
        return self.values.pop(0)


def test_decompose_examples(rng):
    pos, neg, pn, nn = decompose_pos_neg(SparseVector.from_dense([2.0, -1.0, 0.0]))
    np.testing.assert_array_equal(pos.to_dense(3), [2, 0, 0])
    np.testing.assert_array_equal(neg.to_dense(3), [0, 1, 0])
    assert (pn, nn) == (2.0, 1.0)
    pos, neg, pn, nn = decompose_pos_neg(SparseVector.from_dense([1.0, 0.0, 4.0]))
    assert neg.nnz == 0 and nn == 0.0 and pn == 5.0
    for _ in range(50):
        row = SparseVector.from_dense(rng.standard_normal(20) * (rng.uniform(size=20) < 0.4))
        pos, neg, pn, nn = decompose_pos_neg(row)
        assert np.array_equal(pos.to_dense(20) - neg.to_dense(20), row.to_dense(20))
        assert np.all(pos.values > 0) and np.all(neg.values > 0)
        assert not set(pos.indices.tolist()) & set(neg.indices.tolist())


def test_sampler_by_hand():
    s = build_sampler([1.0, 3.0])
    assert [s.prefix(k) for k in (1, 2)] == [1.0, 4.0]
    assert s.total == 4.0
    assert s.find(0.5 * s.total) == 1
    assert s.find(0.999) == 0
    assert s.find(1.0) == 1
    assert sample(s, FixedRng([0.5])) == 1
    assert sample(s, FixedRng([0.2])) == 0


def test_sampler_single_weight_and_zero():
    s = build_sampler(SparseVector([7], [0.3]))
    r = Rng(1)
    assert {sample(s, r) for _ in range(100)} == {7}
    with pytest.raises(AllZeroWeights):
        build_sampler([0.0, 0.0])


def test_sampler_boundary_never_returns_zero_weight():
    s = build_sampler([1.0, 0.0, 2.0, 0.0])
    assert s.find(s.total) == 2
    assert s.find(np.nextafter(s.total, 0)) == 2
    np.testing.assert_array_equal(s.find_batch([0.0, 0.99, 1.0, 3.0, 5.0]), [0, 0, 2, 2, 2])


def test_sampler_frequencies():
    s = build_sampler([1.0, 3.0])
    r = Rng(2024)
    draws = np.array([sample(s, r) for _ in range(100_000)])
    for k, p in enumerate([0.25, 0.75]):
        freq = np.mean(draws == k)
        assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / draws.size)


def test_replay_determinism():
    s = build_sampler(np.arange(1.0, 11.0))
    a = [sample(s, Rng(5, 3)) for _ in range(1)]
    r1, r2 = Rng(5, 3), Rng(5, 3)
    assert [sample(s, r1) for _ in range(500)] == [sample(s, r2) for _ in range(500)]
    assert a[0] == sample(s, Rng(5, 3))
    assert Rng(5, 3).uniforms(10).tolist() != Rng(5, 4).uniforms(10).tolist()


def test_rng_stream_split():
    base = Rng(11, 6)
    child = base.spawn(3)
    assert (child.seed, child.stream) == (11, 6 ^ 3)
    assert child.uniforms(20).tolist() == Rng(11, 5).uniforms(20).tolist()


@pytest.mark.parametrize("chunks", [[1] * 50 + [2000], [700, 700, 1], [3000], [5, 100, 1019, 1, 2000]])
def test_rng_chunk_invariance(chunks):
    total = sum(chunks)
    ref = Rng(9, 1).uniforms(total)
    r = Rng(9, 1)
    got = np.concatenate([r.uniforms(c) if c > 1 else np.array([r.uniform()]) for c in chunks])
    np.testing.assert_array_equal(got, ref)
    assert np.all((ref >= 0) & (ref < 1))


def test_batch_matches_scalar_path():
    s = build_sampler([0.5, 0.0, 2.0, 1.5, 0.25])
    u = Rng(3).uniforms(5000)
    batch = s.sample_batch(u)
    scalar = [s.support[s.find(v * s.total)] for v in u.tolist()]
    np.testing.assert_array_equal(batch, scalar)


def test_chi_square_goodness_of_fit():
    gen = np.random.default_rng(77)
    for trial in range(10):
        k = int(gen.integers(2, 30))
        w = gen.exponential(size=k)
        s = build_sampler(w)
        draws = s.sample_batch(Rng(1000 + trial).uniforms(10**6))
        counts = np.bincount(draws, minlength=k)
        expected = w / w.sum() * draws.size
        assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_gradient_examples():
    row = RowSampler.from_row(SparseVector.from_dense([2.0, -1.0]))
    r = Rng(0)
    for _ in range(20):
        g = stochastic_constraint_grad(row, 1.0, r)
        np.testing.assert_array_equal(g.to_dense(2), [2, -1])
    np.testing.assert_array_equal(expected_grad_enumeration(row, 1.0, 2), [2, -1])
    pos = RowSampler.from_row(SparseVector.from_dense([1.0, 1.0, 2.0]))
    np.testing.assert_allclose(expected_grad_enumeration(pos, 1.0, 3), [1, 1, 2], rtol=0, atol=1e-15)
    assert stochastic_constraint_grad(pos, 0.0, r).nnz == 0
    assert pos.neg is None and pos.neg_norm == 0.0


def test_gradient_two_sparse_sorted():
    # pos and neg supports are disjoint, so i == j never happens for one row;
    # the estimator still has at most two nonzeros and sorted indices
    row = RowSampler.from_row(SparseVector.from_dense([-1.0, 3.0, -2.0, 0.5]))
    r = Rng(8)
    for _ in range(500):
        g = stochastic_constraint_grad(row, -0.7, r)
        assert g.nnz <= 2
        assert list(g.indices) == sorted(g.indices)


def _random_rows(m, n, seed):
    gen = np.random.default_rng(seed)
    A = random_sparse_matrix(m, n, gen, row_nnz=min(n, 6))
    return [A.row(l) for l in range(m)]


def test_unbiasedness_by_enumeration():
    gen = np.random.default_rng(4)
    for seed in range(10):
        for row in _random_rows(15, 25, seed):
            sp = float(gen.uniform(-2, 2))
            exact = sp * row.to_dense(25)
            got = expected_grad_enumeration(RowSampler.from_row(row), sp, 25)
            assert np.max(np.abs(got - exact)) <= 1e-12


def test_norm_bound_every_draw():
    for row in _random_rows(10, 30, 2):
        rs = RowSampler.from_row(row)
        r = Rng(5)
        for sp in (1.0, -0.5):
            bound = (rs.pos_norm ** 2 + rs.neg_norm ** 2) * sp ** 2
            for _ in range(200):
                g = stochastic_constraint_grad(rs, sp, r)
                assert g.norm() ** 2 <= bound * (1 + 1e-12)
                assert g.nnz <= 2
                assert bound <= rs.l1_norm ** 2 * sp ** 2


def test_batch_gradient_distribution():
    rs = RowSampler.from_row(SparseVector.from_dense([1.0, -2.0, 3.0, -0.5]))
    i, vi, j, vj = stochastic_constraint_grad_batch(rs, 2.0, Rng(1), 200_000)
    assert set(np.unique(i)) <= {0, 2} and set(np.unique(j)) <= {1, 3}
    mean = np.zeros(4)
    np.add.at(mean, i, vi)
    np.add.at(mean, j, vj)
    mean /= i.size
    se = rs.l1_norm * 2 / np.sqrt(i.size)
    np.testing.assert_allclose(mean, [2, -4, 6, -1], atol=4 * se)
    i, vi, j, vj = stochastic_constraint_grad_batch(rs, 0.0, Rng(1), 3)
    assert np.all(i == -1) and np.all(vj == 0)


def _tiny_problem():
    return build_problem(n=3, m=2, c=[1.0, -1.0, 0.0], matrix=[[1, -2, 0], [0, 0, 0.5]],
                         b=[0.0, 1.0], feasible_set=Box.uniform(3, 0, 1))


def test_oracle_lazy_cache_and_bounds():
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = _tiny_problem()
    o = RandomizedOracle(p)
    assert o.samplers_built == 0
    x = [0.5, 0.5, 0.5]
    o.constraint_grad(x, 0, -0.5, Rng(1))
    o.constraint_grad(x, 0, -0.5, Rng(2))
    assert o.samplers_built == 1
    assert o.grad_bounds() == (pytest.approx(np.sqrt(2)), 3.0)
    np.testing.assert_array_equal(o.objective_grad(x, Rng(0)).to_dense(3), [1, -1, 0])
    ro = RandomizedOracle(p, randomize_objective=True)
    assert ro.grad_bounds()[0] == 2.0
    g = ro.objective_grad(x, Rng(0))
    np.testing.assert_array_equal(g.to_dense(3), [1, -1, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-3),
                min_size=1, max_size=12).filter(lambda r: any(r)),
       st.floats(-3, 3, allow_nan=False))
def test_unbiased_property(row, sp):
    vec = SparseVector.from_dense(row)
    got = expected_grad_enumeration(RowSampler.from_row(vec), sp, len(row))
    np.testing.assert_allclose(got, sp * np.asarray(row), rtol=0, atol=1e-12 * max(1, np.abs(row).sum()))

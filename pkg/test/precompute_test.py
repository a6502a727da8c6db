import itertools

import numpy as np
import pytest

from fastgnh.backprop import dense_gnh_oracle
from fastgnh.exceptions import ResourceError, ShapeError
from fastgnh.precompute import (
    WeightIndex,
    WorkCounter,
    column_norms,
    entry_exact,
    gnh_diagonal,
    precompute,
    v_vector,
)

from .helpers.util import make_problem


ORACLE_CASES = [
    ("tiny-mse", 1, 0),
    ("tiny-mse", 7, 1),
    ("tiny-mse", 64, 2),
    ("tiny-ce", 1, 3),
    ("tiny-ce", 7, 4),
    ("tiny-ce", 64, 5),
    ("tiny-autoencoder", 7, 6),
]


class TestEntryExact:
    @pytest.mark.parametrize("name,n,seed", ORACLE_CASES)
    def test_matches_dense_oracle(self, name, n, seed):
        problem = make_problem(name, n, seed)
        dense = dense_gnh_oracle(problem.net, problem.batch)
        scale = np.abs(dense).max()
        entries = np.array(
            [[entry_exact(problem.pre, k, m) for m in range(problem.size)] for k in range(problem.size)]
        )
        assert np.abs(entries - dense).max() <= 1e-10 * scale

    def test_symmetric(self, tiny_ce):
        for k, m in [(0, 5), (17, 160), (99, 3)]:
            assert entry_exact(tiny_ce.pre, k, m) == pytest.approx(entry_exact(tiny_ce.pre, m, k), rel=1e-14)

    def test_accepts_weight_index(self, tiny_ce):
        index = WeightIndex.from_position(tiny_ce.net.layout, 1, 2, 3)
        k = tiny_ce.net.layout.flat(1, 2, 3)
        assert index.flat == k
        assert entry_exact(tiny_ce.pre, index, 4) == entry_exact(tiny_ce.pre, k, 4)

    def test_counts_work(self, tiny_ce):
        counter = WorkCounter()
        entry_exact(tiny_ce.pre, 3, 40, counter)
        assert counter["entry"] == 3 * tiny_ce.pre.n * tiny_ce.pre.output_dim

    def test_index_out_of_range(self, tiny_mse):
        with pytest.raises(ShapeError):
            entry_exact(tiny_mse.pre, 0, tiny_mse.size)


class TestPrecompute:
    @pytest.mark.parametrize("name", ["tiny-mse", "tiny-ce", "tiny-autoencoder"])
    def test_recurrence(self, name):
        problem = make_problem(name, 11, 7)
        net, trace, pre = problem.net, problem.trace, problem.pre
        rng = np.random.default_rng(0)
        last = net.n_layers - 1
        r = np.asarray(problem.curv.r_factors)
        top = r * trace.act_derivs[last][:, None, :]
        assert np.allclose(pre.c_tensors[last], top, rtol=1e-12, atol=1e-14)
        for l in range(last, 0, -1):
            for i in rng.choice(pre.n, size=3, replace=False):
                expected = (pre.c_tensors[l][i] @ net.propagating(l)) * trace.act_derivs[l - 1][i]
                assert np.allclose(pre.c_tensors[l - 1][i], expected, rtol=1e-12, atol=1e-14)

    def test_shapes_and_storage(self, tiny_ce):
        pre = tiny_ce.pre
        d = tiny_ce.net.layer_sizes
        assert [c.shape for c in pre.c_tensors] == [(64, 4, 8), (64, 4, 6), (64, 4, 4)]
        assert pre.storage_count == 64 * 4 * (d[1] + d[2] + d[3])
        assert pre.nbytes == 8 * pre.storage_count
        assert pre.size == tiny_ce.size

    @pytest.mark.parametrize("name,n,seed", ORACLE_CASES)
    def test_diagonal_identity(self, name, n, seed):
        problem = make_problem(name, n, seed)
        dense = dense_gnh_oracle(problem.net, problem.batch)
        diagonal = gnh_diagonal(problem.pre)
        assert np.allclose(diagonal, np.diag(dense), rtol=1e-11, atol=1e-11 * np.abs(dense).max())

    def test_norm_table(self, tiny_ce):
        norms = column_norms(tiny_ce.pre)
        table = norms.dense()
        assert table.shape == (tiny_ce.size, tiny_ce.pre.n)
        assert np.allclose((table ** 2).sum(axis=1), gnh_diagonal(tiny_ce.pre))
        for k in (0, 50, 169):
            assert norms.total_norm(k) ** 2 == pytest.approx(entry_exact(tiny_ce.pre, k, k))

    def test_v_vector(self, tiny_ce):
        pre = tiny_ce.pre
        k, m = 12, 130
        total = sum(v_vector(pre, k, i) @ v_vector(pre, m, i) for i in range(pre.n))
        assert total == pytest.approx(entry_exact(pre, k, m), rel=1e-12)
        assert np.allclose(pre.v_block([k])[0], pre.v_columns(k))
        with pytest.raises(ShapeError):
            v_vector(pre, k, pre.n)

    def test_single_precision_storage(self, problem_db):
        double = problem_db("tiny-ce", 32, 9)
        single = problem_db("tiny-ce", 32, 9, np.float32)
        assert single.pre.dtype == np.float32
        assert single.pre.nbytes * 2 == double.pre.nbytes
        for k, m in itertools.product([0, 77], [5, 150]):
            exact = entry_exact(double.pre, k, m)
            assert entry_exact(single.pre, k, m) == pytest.approx(exact, rel=1e-4, abs=1e-7)

    def test_memory_budget(self, tiny_ce):
        with pytest.raises(ResourceError):
            precompute(tiny_ce.net, tiny_ce.batch, tiny_ce.curv, tiny_ce.trace, memory_budget=100)

    def test_trace_mismatch(self, tiny_ce, tiny_mse):
        with pytest.raises(ShapeError):
            precompute(tiny_ce.net, tiny_ce.batch, tiny_ce.curv, tiny_mse.trace)

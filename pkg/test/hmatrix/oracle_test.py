import numpy as np
import pytest

from fastgnh.backprop import dense_gnh_oracle
from fastgnh.exceptions import ConfigError
from fastgnh.hmatrix import EntryOracle, distance, distances_from
from fastgnh.sampling import EstimatorConfig


class TestEntryOracle:
    def test_exact_blocks(self, tiny_ce):
        dense = dense_gnh_oracle(tiny_ce.net, tiny_ce.batch)
        oracle = EntryOracle.exact(tiny_ce.pre, lam=0.25)
        rows, cols = np.array([3, 0, 77, 12]), np.arange(0, 170, 9)
        expected = dense[np.ix_(rows, cols)] + 0.25 * (rows[:, None] == cols[None, :])
        assert np.allclose(oracle.block(rows, cols), expected, rtol=1e-10, atol=1e-14)
        assert np.allclose(oracle.diagonal(), np.diag(dense) + 0.25)
        assert oracle.evaluations == rows.size * cols.size

    def test_sampled_is_symmetric(self, tiny_ce):
        oracle = EntryOracle.sampled(tiny_ce.pre, EstimatorConfig(c=5), lam=0.0, threads=2)
        idx = np.arange(0, 170, 13)
        block = oracle.block(idx, idx)
        assert np.array_equal(block[np.triu_indices(len(idx), 1)], block.T[np.triu_indices(len(idx), 1)])
        assert oracle.mode == "sampled"

    def test_from_dense(self):
        matrix = np.arange(9.0).reshape(3, 3)
        oracle = EntryOracle.from_dense(matrix, lam=1.0)
        assert oracle.entry(1, 1) == 5.0
        assert oracle.entry(0, 2) == 2.0
        assert oracle.size == 3

    def test_rejects_bad_input(self):
        with pytest.raises(ConfigError):
            EntryOracle.from_dense(np.zeros((2, 3)))
        with pytest.raises(ConfigError):
            EntryOracle.from_dense(np.eye(2), lam=-1.0)


class TestDistances:
    def test_angle(self):
        oracle = EntryOracle.from_dense(np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 2.0]]))
        assert np.allclose(distances_from(oracle, 0, [0, 1, 2]), [0.0, 0.75, 1.0])

    def test_euclidean(self):
        oracle = EntryOracle.from_dense(np.array([[4.0, 1.0], [1.0, 2.0]]))
        assert distance(oracle, 0, 1, metric="euclidean") == pytest.approx(2.0)
        assert distance(oracle, 1, 1, metric="euclidean") == 0.0

    def test_unknown_metric(self):
        oracle = EntryOracle.from_dense(np.eye(2))
        with pytest.raises(ConfigError):
            distance(oracle, 0, 1, metric="cosine")

import math

import numpy as np
import pytest

from fastgnh.backprop import forward, loss_curvature
from fastgnh.exceptions import ConfigError, ResourceError
from fastgnh.network import Batch
from fastgnh.precompute import WorkCounter, column_norms, entry_exact, precompute
from fastgnh.sampledata import NetworkSpec, load_network_spec, random_network, synthetic_batch
from fastgnh.sampling import (
    EstimatorConfig,
    build_distribution,
    concentration_test,
    entry_estimate,
    matrix_estimate,
    uniform_baseline_estimate,
    with_seed,
)


def _pairs(size, count, seed):
    rng = np.random.default_rng(seed)
    pairs = set()
    while len(pairs) < count:
        k, m = sorted(rng.choice(size, size=2, replace=False))
        pairs.add((int(k), int(m)))
    return sorted(pairs)


def _problem_for(layer_sizes, n, seed=0):
    spec = NetworkSpec.create(layer_sizes, "softplus,identity", "cross-entropy", "augmented")
    net = random_network(spec, seed)
    batch = synthetic_batch(spec, n, seed)
    trace = forward(net, batch)
    return precompute(net, batch, loss_curvature(net, trace, batch), trace)


class TestEstimatorConfig:
    def test_eta(self):
        cfg = EstimatorConfig(c=100, delta=0.1)
        assert cfg.eta == pytest.approx(1 + math.sqrt(8 * math.log(10)))
        assert cfg.samples_for(0.5) == math.ceil(cfg.eta ** 2 / 0.25)

    @pytest.mark.parametrize("values", [{"c": 0}, {"delta": 0.0}, {"delta": 1.0}, {"seed": -1}])
    def test_rejects_invalid(self, values):
        with pytest.raises(ConfigError):
            EstimatorConfig(**values)

    def test_with_seed(self):
        assert with_seed(EstimatorConfig(c=7), 3) == EstimatorConfig(c=7, seed=3)


class TestDistribution:
    def test_probabilities(self, tiny_ce):
        dist = build_distribution(tiny_ce.pre, 3, 120)
        norms = column_norms(tiny_ce.pre)
        weights = norms.norms(3) * norms.norms(120)
        assert np.allclose(dist.probs, weights / weights.sum())
        assert dist.cumulative[-1] == 1.0
        assert dist.total_mass == pytest.approx(weights.sum())

    def test_draw_in_range(self, tiny_ce):
        dist = build_distribution(tiny_ce.pre, 3, 120)
        picks = dist.draw(np.random.default_rng(0), 500)
        assert picks.min() >= 0 and picks.max() < tiny_ce.pre.n
        # points with zero probability are never drawn
        assert np.all(dist.probs[picks] > 0)


class TestEntryEstimate:
    def test_reproducible_and_symmetric(self, tiny_ce):
        cfg = EstimatorConfig(c=50, seed=11)
        a = entry_estimate(tiny_ce.pre, 10, 140, cfg)
        b = entry_estimate(tiny_ce.pre, 10, 140, cfg)
        c = entry_estimate(tiny_ce.pre, 140, 10, cfg)
        assert a.value == b.value == c.value
        assert a.c_used == 50
        assert entry_estimate(tiny_ce.pre, 10, 140, cfg, trial=1).value != a.value
        assert entry_estimate(tiny_ce.pre, 10, 140, with_seed(cfg, 12)).value != a.value

    def test_bound(self, tiny_ce):
        cfg = EstimatorConfig(c=64, delta=0.05)
        norms = column_norms(tiny_ce.pre)
        est = entry_estimate(tiny_ce.pre, 7, 99, cfg)
        expected = cfg.eta / 8.0 * norms.total_norm(7) * norms.total_norm(99)
        assert est.bound == pytest.approx(expected)

    @pytest.mark.parametrize("k", [0, 42, 169])
    def test_diagonal_exact_with_one_sample(self, tiny_ce, k):
        est = entry_estimate(tiny_ce.pre, k, k, EstimatorConfig(c=1))
        assert est.exact
        assert est.c_used == 1
        assert est.value == pytest.approx(entry_exact(tiny_ce.pre, k, k), rel=1e-12)

    def test_single_data_point_is_exact(self, problem_db):
        problem = problem_db("tiny-ce", 1, 2)
        est = entry_estimate(problem.pre, 5, 60, EstimatorConfig(c=3))
        assert est.exact
        assert est.value == pytest.approx(entry_exact(problem.pre, 5, 60), rel=1e-12, abs=1e-15)

    def test_zero_mass(self):
        spec = load_network_spec("tiny-mse")
        net = random_network(spec, 0)
        inputs = np.random.default_rng(0).standard_normal((5, 6))
        inputs[:, 0] = 0.0
        batch = Batch.create(inputs, np.zeros((5, 3)))
        trace = forward(net, batch)
        pre = precompute(net, batch, loss_curvature(net, trace, batch), trace)
        # layer 0, column 0 multiplies the zero feature
        k = net.layout.flat(0, 1, 0)
        est = entry_estimate(pre, k, 20, EstimatorConfig())
        assert est.value == 0.0
        assert est.exact
        assert est.c_used == 0
        assert build_distribution(pre, k, 20).degenerate


class TestEstimatorStatistics:
    """Unbiasedness, variance bound and concentration over many trials"""

    @pytest.fixture(scope="class")
    def trials(self, problem_db):
        problem = problem_db("tiny-ce", 64, 1)
        pre = problem.pre
        cfg = EstimatorConfig(c=10, seed=5)
        norms = column_norms(pre)
        results = []
        for k, m in _pairs(pre.size, 50, 0):
            values = np.array(
                [entry_estimate(pre, k, m, cfg, trial=t, norms=norms).value for t in range(1000)]
            )
            bound = norms.total_norm(k) ** 2 * norms.total_norm(m) ** 2 / cfg.c
            results.append((entry_exact(pre, k, m), values, bound))
        return results

    def test_unbiased(self, trials):
        for exact, values, _ in trials:
            standard_error = values.std(ddof=1) / np.sqrt(len(values))
            assert abs(values.mean() - exact) <= 4 * standard_error + 1e-14

    def test_variance_bound(self, trials):
        for _, values, bound in trials:
            assert values.var(ddof=1) <= 1.1 * bound

    @pytest.mark.parametrize("delta", [0.05, 0.2])
    def test_concentration(self, tiny_ce, delta):
        cfg = EstimatorConfig(c=20, delta=delta, seed=2)
        for k, m in _pairs(tiny_ce.size, 50, 0):
            result = concentration_test(tiny_ce.pre, k, m, cfg, trials=1000)
            assert result.failure_rate <= delta
            assert len(result.estimates) == 1000

    def test_concentration_needs_trials(self, tiny_ce):
        with pytest.raises(ConfigError):
            concentration_test(tiny_ce.pre, 0, 1, EstimatorConfig(), trials=10)

    def test_uniform_baseline_unbiased(self, tiny_ce):
        cfg = EstimatorConfig(c=10, seed=1)
        exact = entry_exact(tiny_ce.pre, 3, 90)
        values = np.array([uniform_baseline_estimate(tiny_ce.pre, 3, 90, cfg, trial=t).value for t in range(2000)])
        standard_error = values.std(ddof=1) / np.sqrt(len(values))
        assert abs(values.mean() - exact) <= 4 * standard_error + 1e-14


class TestCostScaling:
    def _work(self, pre, c=50):
        counter = WorkCounter()
        norms = column_norms(pre)
        for k, m in _pairs(pre.size, 20, 3):
            entry_estimate(pre, k, m, EstimatorConfig(c=c), norms=norms, counter=counter)
        return counter

    def test_independent_of_parameter_count(self):
        small = self._work(_problem_for([10, 8, 4], 100))
        large = self._work(_problem_for([10, 16, 4], 100))
        total = lambda w: w["samples"] + w["distribution"]
        assert abs(total(large) - total(small)) <= 0.2 * total(small)

    def test_distribution_linear_in_data(self):
        small = self._work(_problem_for([10, 8, 4], 100))
        large = self._work(_problem_for([10, 8, 4], 200))
        ratio = large["distribution"] / small["distribution"]
        assert 1.6 <= ratio <= 2.4


class TestMatrixEstimate:
    def test_symmetric_with_exact_diagonal(self, tiny_ce):
        indices = [0, 9, 33, 80, 169]
        estimate = matrix_estimate(tiny_ce.pre, EstimatorConfig(c=20), indices)
        assert np.array_equal(estimate, estimate.T)
        for a, k in enumerate(indices):
            assert estimate[a, a] == pytest.approx(entry_exact(tiny_ce.pre, k, k), rel=1e-12)

    def test_threads_do_not_change_values(self, tiny_ce):
        cfg = EstimatorConfig(c=20, seed=4)
        indices = list(range(0, 170, 17))
        one = matrix_estimate(tiny_ce.pre, cfg, indices, threads=1)
        four = matrix_estimate(tiny_ce.pre, cfg, indices, threads=4)
        assert np.array_equal(one, four)

    def test_uniform_scheme(self, tiny_ce):
        estimate = matrix_estimate(tiny_ce.pre, EstimatorConfig(c=20), [1, 2, 3], scheme="uniform")
        assert estimate.shape == (3, 3)

    def test_memory_guard(self, tiny_ce):
        with pytest.raises(ResourceError):
            matrix_estimate(tiny_ce.pre, EstimatorConfig(), memory_budget=1000)

    def test_error_decreases_with_samples(self, problem_db):
        pre = problem_db("tiny-ce", 64, 1).pre
        indices = np.arange(0, pre.size, 5)
        exact = np.array([[entry_exact(pre, k, m) for m in indices] for k in indices])
        errors = [
            np.linalg.norm(matrix_estimate(pre, EstimatorConfig(c=c, seed=1), indices) - exact)
            for c in (10, 1000)
        ]
        assert errors[1] < errors[0]

import numpy as np
import pytest

from fastgnh.exceptions import ConfigError
from fastgnh.sampledata import (
    NetworkSpec,
    gen_synthetic,
    load_network_spec,
    random_network,
    synthetic_batch,
)


class TestNetworkSpec:
    @pytest.mark.parametrize(
        "name, size",
        [("tiny-mse", 36), ("tiny-ce", 170), ("desk-classifier", 1992), ("mnist-classifier", 15910)],
    )
    def test_canned_sizes(self, name, size):
        assert load_network_spec(name).size == size

    def test_unknown_network(self):
        with pytest.raises(ConfigError, match="Unknown network 'resnet'"):
            load_network_spec("resnet")

    def test_single_activation_repeats(self):
        spec = NetworkSpec.create([5, 4, 3], "softplus")
        assert spec.activations == ("softplus", "softplus")

    def test_invalid(self):
        with pytest.raises(ConfigError):
            NetworkSpec.create([5])
        with pytest.raises(ConfigError):
            NetworkSpec.create([5, 3], kind="regressor")
        with pytest.raises(ConfigError):
            NetworkSpec.create([5, 2, 4], kind="autoencoder")


class TestRandomNetwork:
    def test_deterministic(self):
        spec = load_network_spec("tiny-ce")
        first, second = random_network(spec, 4), random_network(spec, 4)
        assert np.array_equal(first.weight_vector(), second.weight_vector())
        assert not np.array_equal(first.weight_vector(), random_network(spec, 5).weight_vector())

    def test_shapes(self):
        net = random_network(load_network_spec("tiny-ce"), 0)
        assert [w.shape for w in net.weights] == [(8, 11), (6, 9), (4, 7)]


class TestSynthetic:
    def test_classifier_batch(self):
        spec = load_network_spec("tiny-ce")
        batch = synthetic_batch(spec, 50, 2)
        assert batch.inputs.shape == (50, 10)
        assert batch.labels.shape == (50, 4)
        assert np.all(batch.labels.sum(axis=1) == 1)

    def test_autoencoder_batch(self):
        batch = synthetic_batch(load_network_spec("tiny-autoencoder"), 12, 0)
        assert np.array_equal(batch.inputs, batch.labels)
        assert batch.inputs.min() >= 0.0 and batch.inputs.max() <= 1.0

    def test_gen_without_warmup(self):
        batch, net, report = gen_synthetic(load_network_spec("tiny-mse"), 9, 1)
        assert batch.n == 9
        assert net.size == 36
        assert report is None

    def test_gen_with_warmup(self):
        _, net, report = gen_synthetic(load_network_spec("tiny-mse"), 9, 1, warmup_steps=2)
        assert report.steps == 2
        assert not np.array_equal(net.weight_vector(), random_network(load_network_spec("tiny-mse"), 1).weight_vector())

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from fastgnh.exceptions import ConfigError
from fastgnh.network import MlpNetwork
from fastgnh.util import load_sampledata_json, rng_stream


KINDS = ("classifier", "autoencoder")


@dataclass(frozen=True)
class NetworkSpec(object):
    """
    Architecture of a network to generate.

    layer_sizes: unit counts d_0..d_L
    activations: one kind per layer
    """

    layer_sizes: Tuple[int, ...]
    activations: Tuple[str, ...]
    loss: str = "mean-squared"
    bias_mode: str = "none"
    kind: str = "classifier"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ConfigError("A network spec needs at least an input and an output size")
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown network kind '{self.kind}'. Choose from {', '.join(KINDS)}")
        if self.kind == "autoencoder" and self.layer_sizes[0] != self.layer_sizes[-1]:
            raise ConfigError("An autoencoder needs equal input and output sizes")

    @classmethod
    def create(cls, layer_sizes, activations="relu", loss="mean-squared", bias_mode="none", kind="classifier"):
        layer_sizes = tuple(int(d) for d in layer_sizes)
        if isinstance(activations, str):
            names = [a.strip() for a in activations.split(",")]
            # a single kind applies to every layer
            activations = names * (len(layer_sizes) - 1) if len(names) == 1 else names
        return cls(layer_sizes, tuple(activations), loss, bias_mode, kind)

    @property
    def size(self):
        """Parameter count N"""
        extra = 1 if self.bias_mode == "augmented" else 0
        return sum(
            self.layer_sizes[l + 1] * (self.layer_sizes[l] + extra)
            for l in range(len(self.layer_sizes) - 1)
        )

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "loss": self.loss,
            "bias_mode": self.bias_mode,
            "kind": self.kind,
        }


def load_network_spec(name) -> NetworkSpec:
    """
    Canned architectures, e.g. "tiny-mse" (6->4->3) or "mnist-classifier"
    (784->20->10 with bias, N = 15910).
    """
    specs = load_sampledata_json("networks.json")
    if name not in specs:
        raise ConfigError(f"Unknown network '{name}'. Choose from {', '.join(sorted(specs))}")
    return NetworkSpec.create(**specs[name])


def random_network(spec: NetworkSpec, seed) -> MlpNetwork:
    """Gaussian weights scaled by 1/sqrt(fan-in); the bias column counts as an input"""
    rng = rng_stream(seed, 0)
    extra = 1 if spec.bias_mode == "augmented" else 0
    weights = []
    for l in range(len(spec.layer_sizes) - 1):
        fan_in = spec.layer_sizes[l] + extra
        weights.append(rng.standard_normal((spec.layer_sizes[l + 1], fan_in)) / np.sqrt(fan_in))
    return MlpNetwork(weights, list(spec.activations), spec.loss, spec.bias_mode)

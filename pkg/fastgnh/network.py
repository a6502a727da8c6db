"""
Network, batch and pass-result containers.

Layers are indexed from 0 in code: weight matrix ``weights[l]`` maps
``activations[l]`` to ``activations[l + 1]`` and its activation derivatives
are ``act_derivs[l]``. With ``bias_mode="augmented"`` every non-output
activation (the network input included) carries a trailing homogeneous
coordinate of value one, so ``weights[l]`` has one extra column holding the
bias. The homogeneous coordinate is constant, i.e. its activation
derivative is zero, and the derivative arrays only store the real units.

The weight vector concatenates ``vec(W)`` of every layer in order, where
``vec`` is column-major (numpy ``order="F"``). This is the single ordering
contract used by the gradient, the matvec, the entry evaluators, K-FAC and
the checkpoint format.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from scipy.special import expit

from .exceptions import ConfigError, ShapeError


LOSSES = ("mean-squared", "cross-entropy")
BIAS_MODES = ("none", "augmented")


def _relu(a):
    return np.maximum(a, 0.0)


def _relu_deriv(a):
    # derivative at exactly 0 is 0
    return (a > 0.0).astype(float)


def _softplus(a):
    return np.logaddexp(0.0, a)


def _sigmoid_deriv(a):
    s = expit(a)
    return s * (1.0 - s)


def _identity(a):
    return np.array(a, dtype=float, copy=True)


def _ones(a):
    return np.ones_like(a, dtype=float)


ACTIVATIONS = {
    "relu": (_relu, _relu_deriv),
    "softplus": (_softplus, expit),
    "sigmoid": (expit, _sigmoid_deriv),
    "identity": (_identity, _ones),
}


def activation_value(kind, a):
    return ACTIVATIONS[kind][0](a)


def activation_deriv(kind, a):
    return ACTIVATIONS[kind][1](a)


class WeightLayout(object):
    """
    Maps between the flat weight vector and per-layer matrices.

    Parameters
    ----------
    shapes: List[tuple]
        (rows, cols) of every layer matrix in order
    """

    def __init__(self, shapes):
        self.shapes = [tuple(int(x) for x in s) for s in shapes]
        sizes = [r * c for (r, c) in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.size = int(self.offsets[-1])

    def __len__(self):
        return len(self.shapes)

    def layer_of(self, k):
        """Layer holding flat index k (0-based)"""
        if k < 0 or k >= self.size:
            raise ShapeError(f"Weight index {k} out of range [0, {self.size})")
        return int(np.searchsorted(self.offsets, k, side="right") - 1)

    def position(self, k):
        """Returns (layer, row, col) of flat index k"""
        layer = self.layer_of(k)
        rows, _ = self.shapes[layer]
        local = int(k - self.offsets[layer])
        return layer, local % rows, local // rows

    def flat(self, layer, row, col):
        rows, cols = self.shapes[layer]
        if not (0 <= row < rows and 0 <= col < cols):
            raise ShapeError(
                f"Position ({row}, {col}) out of range for layer {layer} of shape "
                f"{self.shapes[layer]}"
            )
        return int(self.offsets[layer] + col * rows + row)

    def positions(self, indices):
        """Vectorized `position`; returns three integer arrays"""
        indices = np.asarray(indices, dtype=int)
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise ShapeError(f"Weight indices out of range [0, {self.size})")
        layers = np.searchsorted(self.offsets, indices, side="right") - 1
        rows = np.array([self.shapes[l][0] for l in range(len(self))], dtype=int)
        local = indices - self.offsets[layers]
        return layers, local % rows[layers], local // rows[layers]

    def split(self, vector):
        """
        Splits a weight vector (N,) or a block of weight vectors (N, p) into
        per-layer matrices of shape (rows, cols) or (rows, cols, p).
        """
        vector = np.asarray(vector, dtype=float)
        if vector.shape[0] != self.size or vector.ndim > 2:
            raise ShapeError(
                f"Expected a weight vector of length {self.size}, got shape "
                f"{vector.shape}"
            )
        blocks = []
        for (rows, cols), start, stop in zip(
            self.shapes, self.offsets[:-1], self.offsets[1:]
        ):
            shape = (rows, cols) + vector.shape[1:]
            blocks.append(vector[start:stop].reshape(shape, order="F"))
        return blocks

    def join(self, blocks):
        """Inverse of `split`"""
        parts = []
        for block, (rows, cols) in zip(blocks, self.shapes):
            block = np.asarray(block, dtype=float)
            parts.append(block.reshape((rows * cols,) + block.shape[2:], order="F"))
        return np.concatenate(parts, axis=0)


class MlpNetwork(object):
    """
    A fully-connected feed-forward network.

    Instances are immutable: weights are copied and flagged read-only, and
    `with_weights` returns a new network.

    Parameters
    ----------
    weights: List[np.ndarray]
        Layer matrices W_1..W_L, each d_l x d_{l-1} (+1 column when the bias
        is augmented)
    activations: str or List[str]
        Activation kind for every layer (one of relu, softplus, sigmoid,
        identity). A single string applies to every layer.
    loss: str
        "mean-squared" or "cross-entropy"
    bias_mode: str
        "none" or "augmented"
    """

    def __init__(
        self, weights, activations="relu", loss="mean-squared", bias_mode="none"
    ):
        if len(weights) == 0:
            raise ShapeError("A network needs at least one layer")
        if isinstance(activations, str):
            activations = [activations] * len(weights)
        activations = list(activations)
        if len(activations) != len(weights):
            raise ShapeError(
                f"Got {len(activations)} activations for {len(weights)} layers"
            )
        for kind in activations:
            if kind not in ACTIVATIONS:
                raise ConfigError(
                    f"Unknown activation '{kind}'. Choose from "
                    f"{', '.join(ACTIVATIONS)}"
                )
        if loss not in LOSSES:
            raise ConfigError(f"Unknown loss '{loss}'. Choose from {', '.join(LOSSES)}")
        if bias_mode not in BIAS_MODES:
            raise ConfigError(
                f"Unknown bias mode '{bias_mode}'. Choose from {', '.join(BIAS_MODES)}"
            )
        extra = 1 if bias_mode == "augmented" else 0
        frozen = []
        for l, w in enumerate(weights):
            w = np.array(w, dtype=np.float64, copy=True)
            if w.ndim != 2:
                raise ShapeError(f"Layer {l} weights must be a matrix, got {w.shape}")
            if l > 0 and w.shape[1] != frozen[-1].shape[0] + extra:
                raise ShapeError(
                    f"Layer {l} expects {w.shape[1]} inputs but layer {l - 1} "
                    f"produces {frozen[-1].shape[0]} (+{extra} homogeneous)"
                )
            w.setflags(write=False)
            frozen.append(w)
        self.weights = tuple(frozen)
        self.activations = tuple(activations)
        self.loss = loss
        self.bias_mode = bias_mode
        self.layout = WeightLayout([w.shape for w in self.weights])

    def __repr__(self):
        sizes = "->".join(str(d) for d in self.layer_sizes)
        return (
            f"MlpNetwork({sizes}, activations={list(self.activations)}, "
            f"loss='{self.loss}', bias_mode='{self.bias_mode}', N={self.size})"
        )

    @classmethod
    def from_vector(cls, vector, layer_sizes, activations, loss, bias_mode="none"):
        """Builds a network from a flat weight vector and layer sizes d_0..d_L"""
        extra = 1 if bias_mode == "augmented" else 0
        shapes = [
            (layer_sizes[l + 1], layer_sizes[l] + extra)
            for l in range(len(layer_sizes) - 1)
        ]
        layout = WeightLayout(shapes)
        return cls(layout.split(vector), activations, loss, bias_mode)

    @property
    def augmented(self):
        return self.bias_mode == "augmented"

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def layer_sizes(self):
        """Unit counts d_0..d_L (homogeneous coordinates excluded)"""
        extra = 1 if self.augmented else 0
        return (self.weights[0].shape[1] - extra,) + tuple(
            w.shape[0] for w in self.weights
        )

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def size(self):
        """Total parameter count N"""
        return self.layout.size

    def weight_vector(self):
        return self.layout.join(self.weights)

    def with_weights(self, vector):
        return MlpNetwork(
            self.layout.split(vector), self.activations, self.loss, self.bias_mode
        )

    def propagating(self, l):
        """W_l without its bias column: the part that propagates perturbations"""
        w = self.weights[l]
        return w[:, :-1] if self.augmented else w

    def augment(self, x):
        """Appends the homogeneous coordinate to a (n, d) activation block"""
        if not self.augmented:
            return x
        return np.hstack([x, np.ones((x.shape[0], 1))])


@dataclass(frozen=True)
class Batch(object):
    """
    n input/label pairs.

    `inputs` is (n, d_0); `labels` is (n, d_L). Cross-entropy labels are
    one-hot rows; `Batch.create` converts class indices.
    """

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 2:
            raise ShapeError("Batch inputs and labels must be 2-d arrays")
        if self.inputs.shape[0] < 1:
            raise ShapeError("A batch needs at least one data point")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"Got {self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    @classmethod
    def create(cls, inputs, labels, num_classes=None):
        """
        Parameters
        ----------
        inputs: array-like
            (n, d_0) inputs
        labels: array-like
            (n, d_L) label vectors, or (n,) class indices when `num_classes`
            is given
        num_classes: Optional[int]
            One-hot width for class-index labels
        """
        inputs = np.array(inputs, dtype=np.float64, ndmin=2)
        labels = np.asarray(labels)
        if labels.ndim == 1:
            if num_classes is None:
                labels = labels.astype(np.float64)[:, None]
            else:
                classes = labels.astype(int)
                if classes.min() < 0 or classes.max() >= num_classes:
                    raise ShapeError(
                        f"Class labels must lie in [0, {num_classes}), got "
                        f"[{classes.min()}, {classes.max()}]"
                    )
                labels = np.eye(num_classes)[classes]
        labels = np.array(labels, dtype=np.float64, ndmin=2)
        inputs.setflags(write=False)
        labels.setflags(write=False)
        return cls(inputs, labels)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n(self):
        return self.inputs.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Batch.create(self.inputs[indices], self.labels[indices])

    def check(self, net: MlpNetwork):
        if self.inputs.shape[1] != net.input_dim:
            raise ShapeError(
                f"Batch inputs have dimension {self.inputs.shape[1]} but the "
                f"network expects {net.input_dim}"
            )
        if self.labels.shape[1] != net.output_dim:
            raise ShapeError(
                f"Batch labels have dimension {self.labels.shape[1]} but the "
                f"network outputs {net.output_dim}"
            )


@dataclass(frozen=True)
class ForwardTrace(object):
    """
    Result of the forward pass.

    activations: x^0..x^L, each (n, dim) with the homogeneous coordinate
        appended for every non-output layer in augmented mode
    act_derivs: diagonals of M^1..M^L, each (n, d_l)
    """

    activations: List[np.ndarray]
    act_derivs: List[np.ndarray]

    @property
    def outputs(self):
        return self.activations[-1]

    @property
    def n(self):
        return self.activations[0].shape[0]


class LossCurvature(object):
    """
    Per-point loss Hessians Q_i = (1/n) d^2 f / dx^2 and symmetric factors
    R_i with Q_i = R_i^T R_i.

    Mean-squared curvature is the scaled identity and is kept implicit;
    `q_blocks` and `r_factors` materialize it on demand.
    """

    def __init__(self, n, dim, r_factors=None, q_blocks=None, scale=None):
        self.n = n
        self.dim = dim
        self._r = r_factors
        self._q = q_blocks
        self._scale = scale

    @property
    def is_scaled_identity(self):
        return self._r is None

    @property
    def r_factors(self):
        if self._r is None:
            return np.broadcast_to(np.sqrt(self._scale) * np.eye(self.dim), (self.n, self.dim, self.dim))
        return self._r

    @property
    def q_blocks(self):
        if self._q is None:
            return np.broadcast_to(self._scale * np.eye(self.dim), (self.n, self.dim, self.dim))
        return self._q

    def apply_q(self, x):
        """Q_i x_i for a (n, d_L) or (p, n, d_L) block"""
        if self._q is None:
            return self._scale * x
        return np.einsum("nij,...nj->...ni", self._q, x)

    def apply_r(self, x):
        """R_i x_i for a (n, d_L, ...) block acting on the second axis"""
        if self._r is None:
            return np.sqrt(self._scale) * x
        return np.einsum("nij,nj...->ni...", self._r, x)


@dataclass(frozen=True)
class GradientVector(object):
    """Per-layer gradient matrices g^l; `vector` is the flat view"""

    blocks: List[np.ndarray]
    layout: WeightLayout = field(repr=False)

    @property
    def vector(self):
        return self.layout.join(self.blocks)


@dataclass(frozen=True)
class MatvecWorkspace(object):
    """
    Intermediates of the matrix-free GNH matvec.

    linearized: x_hat^1..x_hat^L (linearized forward activations)
    adjoints: z_hat^1..z_hat^L
    blocks: (H w_hat)^l per layer
    """

    linearized: List[np.ndarray]
    adjoints: List[np.ndarray]
    blocks: List[np.ndarray]
    result: Optional[np.ndarray] = None

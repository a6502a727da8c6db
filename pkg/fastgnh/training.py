"""
Plain minibatch SGD, used to move weights away from their random
initialization before curvature experiments.
"""
import logging
import warnings

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .backprop import forward, gradient, loss_value
from .exceptions import ConfigError, NumericError, TrainingError
from .network import Batch, MlpNetwork
from .util import rng_stream


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingReport(object):
    steps: int
    lr: float
    batch_size: int
    seed: int
    initial_loss: float
    final_loss: float
    losses: Tuple[float, ...] = field(repr=False, default=())

    def to_dict(self):
        return {
            "steps": self.steps,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
        }


def _full_loss(net, batch):
    try:
        value = loss_value(net, batch)
    except NumericError as e:
        raise TrainingError(f"Training diverged: {e.message}")
    if not np.isfinite(value):
        raise TrainingError("Training diverged: the loss is not finite")
    return value


def warmup_train(net: MlpNetwork, batch: Batch, steps, lr, batch_size, seed):
    """
    `steps` SGD updates w <- w - lr g on minibatches drawn without
    replacement within each pass over the data.

    Returns
    -------
    Tuple[MlpNetwork, TrainingReport]

    Raises
    ------
    TrainingError
        If a loss or gradient turns non-finite
    """
    if steps < 0 or batch_size < 1 or lr < 0:
        raise ConfigError("Warm-up needs steps >= 0, batch_size >= 1 and lr >= 0")
    rng = rng_stream(seed)
    batch_size = min(batch_size, batch.n)
    initial = _full_loss(net, batch)
    losses = []
    order = np.empty(0, dtype=int)
    vector = net.weight_vector()
    for step in range(steps):
        if len(order) < batch_size:
            order = rng.permutation(batch.n)
        picked, order = order[:batch_size], order[batch_size:]
        minibatch = batch.subset(picked)
        try:
            trace = forward(net, minibatch)
            losses.append(loss_value(net, minibatch, trace))
            g = gradient(net, minibatch, trace).vector
        except NumericError as e:
            raise TrainingError(f"Training diverged at step {step}: {e.message}")
        if not (np.isfinite(losses[-1]) and np.all(np.isfinite(g))):
            raise TrainingError(f"Training diverged at step {step}")
        vector = vector - lr * g
        net = net.with_weights(vector)
    final = _full_loss(net, batch)
    if final > initial:
        warnings.warn(
            f"Warm-up increased the training loss from {initial:.6g} to {final:.6g}; "
            f"consider a smaller learning rate"
        )
    logger.info("Warm-up: %d steps, loss %.6g -> %.6g", steps, initial, final)
    report = TrainingReport(steps, float(lr), batch_size, int(seed), initial, final, tuple(losses))
    return net, report

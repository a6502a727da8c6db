import logging

import numpy as np

from fastgnh.network import Batch, MlpNetwork
from fastgnh.sampledata.networks import NetworkSpec, random_network
from fastgnh.training import warmup_train
from fastgnh.util import rng_stream


logger = logging.getLogger(__name__)


def synthetic_batch(spec: NetworkSpec, n, seed) -> Batch:
    """
    Classifier data: Gaussian inputs labelled by the argmax of a fixed random
    linear map, one-hot encoded. Autoencoder data: uniform inputs in [0, 1]
    reproduced as labels.
    """
    d_in, d_out = spec.layer_sizes[0], spec.layer_sizes[-1]
    if spec.kind == "autoencoder":
        inputs = rng_stream(seed, 1).random((n, d_in))
        return Batch.create(inputs, inputs)
    inputs = rng_stream(seed, 1).standard_normal((n, d_in))
    projection = rng_stream(seed, 2).standard_normal((d_in, d_out))
    classes = np.argmax(inputs @ projection, axis=1)
    return Batch.create(inputs, classes, num_classes=d_out)


def gen_synthetic(spec: NetworkSpec, n, seed, warmup_steps=0, lr=0.1, batch_size=32):
    """
    A random network and a matching synthetic batch.

    With `warmup_steps` > 0 the network is first trained by SGD on the batch
    so that its weights are no longer random.

    Returns
    -------
    Tuple[Batch, MlpNetwork, Optional[TrainingReport]]
    """
    batch = synthetic_batch(spec, n, seed)
    net = random_network(spec, seed)
    report = None
    if warmup_steps:
        net, report = warmup_train(net, batch, warmup_steps, lr, batch_size, seed)
    logger.debug("Generated %r with n=%d", net, n)
    return batch, net, report

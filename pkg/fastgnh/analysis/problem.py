import logging

from dataclasses import dataclass
from typing import Optional

import numpy as np

from fastgnh.backprop import DENSE_ORACLE_LIMIT, dense_gnh_oracle, forward, gnh_matvec, loss_curvature
from fastgnh.config import ExperimentConfig
from fastgnh.datasets import ingest_cifar, ingest_mnist
from fastgnh.exceptions import ConfigError
from fastgnh.network import Batch, ForwardTrace, LossCurvature, MlpNetwork
from fastgnh.precompute import GnhPrecomp, precompute
from fastgnh.sampledata.networks import NetworkSpec, random_network
from fastgnh.sampledata.synthetic import synthetic_batch
from fastgnh.training import TrainingReport, warmup_train


logger = logging.getLogger(__name__)


@dataclass
class Problem(object):
    """A network on a batch with everything the curvature experiments share"""

    spec: NetworkSpec
    net: MlpNetwork
    batch: Batch
    trace: ForwardTrace
    curv: LossCurvature
    pre: Optional[GnhPrecomp] = None
    training: Optional[TrainingReport] = None
    _dense: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.net.size

    def dense(self):
        """The exact GNH, assembled once"""
        if self._dense is None:
            self._dense = dense_gnh_oracle(self.net, self.batch)
        return self._dense

    def matvec(self, lam=0.0):
        """
        Applies H + lam I to an (N, p) block, through the dense matrix when
        it is small enough and matrix-free otherwise.
        """
        if self.size <= DENSE_ORACLE_LIMIT // 4:
            dense = self.dense()
            return lambda x: dense @ x + lam * x
        return lambda x: gnh_matvec(self.net, self.trace, self.curv, x) + lam * x


def load_data(cfg: ExperimentConfig, spec: NetworkSpec) -> Batch:
    autoencoder = spec.kind == "autoencoder"
    if cfg.dataset == "synthetic":
        return synthetic_batch(spec, cfg.n, cfg.seed)
    if cfg.dataset == "mnist":
        return ingest_mnist(cfg.images, cfg.labels or None, autoencoder, cfg.n, cfg.seed)
    if cfg.dataset == "cifar":
        return ingest_cifar(cfg.images.split(","), autoencoder, cfg.n, cfg.seed)
    raise ConfigError(f"Unknown dataset '{cfg.dataset}'. Choose from synthetic, mnist, cifar")


def build_problem(cfg: ExperimentConfig, with_precompute=True, dtype=np.float64) -> Problem:
    """
    Data, network (warmed up when configured), forward trace, curvature and
    optionally the C-tensor precomputation.
    """
    spec = cfg.network_spec()
    batch = load_data(cfg, spec)
    net = random_network(spec, cfg.seed)
    training = None
    if cfg.warmup_steps:
        net, training = warmup_train(net, batch, cfg.warmup_steps, cfg.lr, cfg.batch_size, cfg.seed)
    trace = forward(net, batch)
    curv = loss_curvature(net, trace, batch)
    pre = None
    if with_precompute:
        pre = precompute(net, batch, curv, trace, dtype=dtype, memory_budget=cfg.memory_budget)
    logger.info("Problem ready: %r, n=%d", net, batch.n)
    return Problem(spec, net, batch, trace, curv, pre, training)

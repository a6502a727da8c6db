#!/usr/bin/env python3
"""
Contains abstracted functions which are primarily used by the CLI. They can be
imported and used separately; they return results to the caller and leave
printing to the CLI.
"""

import logging
import os

import numpy as np

from jinja2 import Environment, PackageLoader

from fastgnh.backprop import dense_gnh_oracle, forward, gnh_matvec, gradient, loss_curvature
from fastgnh.baselines import kfac_build
from fastgnh.checkpoint import (
    cached_precompute,
    load_batch,
    load_hmatrix,
    load_network,
    load_precomp,
    save_batch,
    save_hmatrix,
    save_network,
    save_precomp,
)
from fastgnh.config import ExperimentConfig
from fastgnh.datasets import ingest_cifar, ingest_mnist
from fastgnh.exceptions import ConfigError
from fastgnh.hmatrix import EntryOracle, build_hmatrix, factorize, probe_error
from fastgnh.hmatrix.oracle import METRICS
from fastgnh.operators import MatrixFreeGnh
from fastgnh.precompute import entry_exact, precompute as build_precomp
from fastgnh.sampledata import gen_synthetic, load_network_spec
from fastgnh.sampling import ESTIMATORS, EstimatorConfig, concentration_test, matrix_estimate
from fastgnh.training import warmup_train
from fastgnh.util import load_sampledata_json, parse_number_list, rng_stream


logger = logging.getLogger(__name__)

DTYPES = {"double": np.float64, "single": np.float32}
SOLVE_METHODS = ("hmatrix", "mf", "pcg", "kfac")


def ingest(fmt, images, output, labels=None, autoencoder=False, n=None, seed=0):
    """Reads an MNIST (IDX) or CIFAR-10 (binary batch) dataset into a batch file"""
    if fmt == "mnist":
        batch = ingest_mnist(images, labels, autoencoder, n, seed)
    elif fmt == "cifar":
        batch = ingest_cifar(images.split(","), autoencoder, n, seed)
    else:
        raise ConfigError(f"Unknown dataset format '{fmt}'. Choose from mnist, cifar")
    save_batch(batch, output, source=fmt, autoencoder=bool(autoencoder), seed=seed)
    return batch


def gen(cfg: ExperimentConfig, batch_path, network_path):
    """Synthetic batch plus random (optionally warmed-up) network"""
    batch, net, report = gen_synthetic(
        cfg.network_spec(), cfg.n, cfg.seed, cfg.warmup_steps, cfg.lr, cfg.batch_size
    )
    save_batch(batch, batch_path, source="synthetic", seed=cfg.seed)
    save_network(net, network_path)
    return batch, net, report


def train(network_path, batch_path, output, steps, lr, batch_size, seed):
    net, report = warmup_train(
        load_network(network_path), load_batch(batch_path), steps, lr, batch_size, seed
    )
    save_network(net, output)
    return report


def _problem(network_path, batch_path):
    net = load_network(network_path)
    batch = load_batch(batch_path)
    trace = forward(net, batch)
    curv = loss_curvature(net, trace, batch)
    return net, batch, trace, curv


def precompute(network_path, batch_path, output=None, dtype="double", cache_dir=None, memory_budget=None):
    """
    C tensors of a saved network on a saved batch. With `cache_dir` the
    result is reused when the same problem was precomputed before.
    """
    if dtype not in DTYPES:
        raise ConfigError(f"Unknown storage type '{dtype}'. Choose from {', '.join(DTYPES)}")
    net, batch, trace, curv = _problem(network_path, batch_path)
    kwargs = {} if memory_budget is None else {"memory_budget": memory_budget}
    if cache_dir:
        pre = cached_precompute(net, batch, curv, trace, cache_dir, DTYPES[dtype], **kwargs)
    else:
        pre = build_precomp(net, batch, curv, trace, dtype=DTYPES[dtype], **kwargs)
    if output:
        save_precomp(pre, output)
    return pre


def entry(precomp_path, k, m, estimator: EstimatorConfig, exact=False, trials=0, scheme="fmc"):
    """
    One GNH entry: exact, estimated, or (with `trials`) a concentration test
    of the estimator against the exact value.
    """
    pre = load_precomp(precomp_path)
    for index in (k, m):
        if not 0 <= index < pre.size:
            raise ConfigError(f"Weight index {index} outside [0, {pre.size})")
    if exact:
        return {"k": k, "m": m, "value": entry_exact(pre, k, m), "exact": True}
    if trials:
        result = concentration_test(pre, k, m, estimator, trials, scheme)
        return {
            "k": k,
            "m": m,
            "exact_value": result.exact_value,
            "bound": result.bound,
            "failure_rate": result.failure_rate,
            "trials": result.trials,
            "delta": estimator.delta,
        }
    est = ESTIMATORS[scheme](pre, min(k, m), max(k, m), estimator)
    return {
        "k": k,
        "m": m,
        "value": est.value,
        "c_used": est.c_used,
        "bound": est.bound,
        "exact": est.exact,
    }


def sample(precomp_path, estimator: EstimatorConfig, output, indices=None, scheme="fmc", threads=1):
    """Estimated GNH principal submatrix written as CSV, rows and columns labelled by weight index"""
    import pandas as pd

    pre = load_precomp(precomp_path)
    indices = np.arange(pre.size) if not indices else np.array(parse_number_list(indices))
    matrix = matrix_estimate(pre, estimator, indices, scheme, threads)
    table = pd.DataFrame(matrix, index=indices, columns=indices)
    table.to_csv(output)
    return table


def build(precomp_path, output, cfg: ExperimentConfig, preset="low", oracle="exact"):
    """H-matrix of the regularized GNH from a saved precomputation"""
    if cfg.metric not in METRICS:
        raise ConfigError(f"Unknown metric '{cfg.metric}'. Choose from {', '.join(METRICS)}")
    pre = load_precomp(precomp_path)
    if oracle == "exact":
        source = EntryOracle.exact(pre, cfg.lam)
    elif oracle == "sampled":
        source = EntryOracle.sampled(pre, cfg.estimator(), cfg.lam, cfg.threads)
    else:
        raise ConfigError(f"Unknown oracle '{oracle}'. Choose from exact, sampled")
    hm = build_hmatrix(source, cfg.preset(preset, pre.size), cfg.seed, cfg.metric, cfg.threads)
    save_hmatrix(hm, output)
    return hm


def _reference(net, trace, curv, lam):
    return lambda x: gnh_matvec(net, trace, curv, x) + lam * x


def probe(hmatrix_path, network_path, batch_path, probes=128, seed=0, dense=False):
    """Relative Frobenius error of a saved H-matrix against H + lam I"""
    hm = load_hmatrix(hmatrix_path)
    net, batch, trace, curv = _problem(network_path, batch_path)
    if net.size != hm.size:
        raise ConfigError(f"H-matrix has N={hm.size} but the network has N={net.size}")
    if dense:
        matrix = dense_gnh_oracle(net, batch)
        reference = lambda x: matrix @ x + hm.lam * x
    else:
        reference = _reference(net, trace, curv, hm.lam)
    return {"N": hm.size, "probes": probes, "eps_f": probe_error(hm, reference, probes, seed), **hm.stats()}


def solve(method, network_path, batch_path, hmatrix_path=None, rhs="gradient", lam=None, tol=1e-8, maxit=None, seed=0, samples=1):
    """
    Solves (H + lam I) x = b with one of `SOLVE_METHODS` and reports the
    residual against the exact operator.

    `rhs` is "gradient" for the loss gradient or "random" for a Gaussian
    vector drawn from `seed`.
    """
    if method not in SOLVE_METHODS:
        raise ConfigError(f"Unknown solver '{method}'. Choose from {', '.join(SOLVE_METHODS)}")
    net, batch, trace, curv = _problem(network_path, batch_path)
    hm = load_hmatrix(hmatrix_path) if hmatrix_path else None
    if method in ("hmatrix", "pcg") and hm is None:
        raise ConfigError(f"Solver '{method}' needs --hmatrix")
    if lam is None:
        lam = hm.lam if hm is not None else 0.0
    if rhs == "gradient":
        b = gradient(net, batch, trace).vector
    elif rhs == "random":
        b = rng_stream(seed).standard_normal(net.size)
    else:
        raise ConfigError(f"Unknown right-hand side '{rhs}'. Choose from gradient, random")

    op = MatrixFreeGnh(net, trace, curv, lam, tol, maxit)
    summary = {"method": method, "N": net.size, "lam": lam}
    if method == "hmatrix":
        x = factorize(hm).solve(b)
    elif method == "kfac":
        approx = kfac_build(net, batch, samples, seed)
        approx.lam = lam
        x = approx.solve(b)
    else:
        if method == "pcg":
            op.preconditioner = factorize(hm).as_preconditioner()
        x = op.solve(b)
        summary.update(iterations=op.last_result.iterations, converged=op.last_result.converged)
    residual = np.linalg.norm(op.matvec(x) - b)
    denom = np.linalg.norm(b)
    summary["relative_residual"] = float(residual / denom) if denom > 0 else float(residual)
    return x, summary


def init_config(path, network=None, force=False):
    """Renders a commented default configuration file"""
    if os.path.exists(path) and not force:
        raise ConfigError(f"{path} already exists; pass --force to overwrite it")
    if network is None:
        cfg = ExperimentConfig()
    else:
        load_network_spec(network)
        cfg = ExperimentConfig(network=network)
    env = Environment(loader=PackageLoader("fastgnh", "templates"))
    template = env.get_template("experiment.cfg.jinja")
    networks = sorted(load_sampledata_json("networks.json"))
    with open(path, "w") as fh:
        fh.write(template.render(config=cfg.to_dict(), path=path, networks=networks))
    return cfg

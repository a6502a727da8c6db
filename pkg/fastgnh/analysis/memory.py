try:
    import pandas as pd
except ImportError:
    raise ImportError(
        "Please run `pip install fastgnh[analysis]` if you "
        "would like to use the fastgnh analysis module."
    )

import numpy as np

from fastgnh.analysis.report import ExperimentReport
from fastgnh.config import ExperimentConfig
from fastgnh.exceptions import ConfigError
from fastgnh.sampledata.networks import NetworkSpec, load_network_spec


SINGLE = np.dtype(np.float32).itemsize


def precompute_bytes(spec: NetworkSpec, n, itemsize=SINGLE):
    """Bytes of the C tensors, sum over layers of n d_L d_l numbers"""
    d_out = spec.layer_sizes[-1]
    return int(sum(n * d_out * d for d in spec.layer_sizes[1:]) * itemsize)


def input_bytes(spec: NetworkSpec, n, itemsize=SINGLE):
    """Bytes of the retained layer inputs"""
    extra = 1 if spec.bias_mode == "augmented" else 0
    return int(sum(n * (d + extra) for d in spec.layer_sizes[:-1]) * itemsize)


def dense_bytes(spec: NetworkSpec, itemsize=SINGLE):
    return int(itemsize * spec.size ** 2)


def memory_row(name, spec: NetworkSpec, n):
    ours = precompute_bytes(spec, n)
    dense = dense_bytes(spec)
    return {
        "network": name,
        "N": spec.size,
        "n": int(n),
        "m_ours": ours,
        "m_inputs": input_bytes(spec, n),
        "m_gnh": dense,
        "ratio": ours / float(dense),
    }


def run_memory_report(cfg: ExperimentConfig, networks=None, n_values=None) -> ExperimentReport:
    """
    Single-precision footprint of the precomputation against the dense GNH.

    Counts are exact and nothing is allocated, so full-size networks can
    be reported on any machine.

    Parameters
    ----------
    networks: Optional[List[str]]
        Canned network names; defaults to the configured network
    n_values: Optional[List[int]]
        Data sizes; defaults to cfg.n
    """
    n_values = list(n_values or [cfg.n])
    if any(n < 1 for n in n_values):
        raise ConfigError(f"Data sizes must be positive, got {n_values}")
    if networks:
        specs = [(name, load_network_spec(name)) for name in networks]
    else:
        specs = [(cfg.network if not cfg.layers else cfg.layers, cfg.network_spec())]
    rows = [memory_row(name, spec, n) for name, spec in specs for n in n_values]
    table = pd.DataFrame(rows)
    summary = {
        "precision": "single",
        "largest_ratio": float(table["ratio"].max()),
    }
    return ExperimentReport("memory", table, summary, cfg.to_dict())

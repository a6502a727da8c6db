import numpy as np

from fastgnh.analysis.problem import Problem
from fastgnh.backprop import forward, loss_curvature
from fastgnh.precompute import precompute
from fastgnh.sampledata import load_network_spec, random_network, synthetic_batch


def make_problem(name="tiny-mse", n=7, seed=0, dtype=np.float64) -> Problem:
    """Random network on a synthetic batch with its trace, curvature and precomputation"""
    spec = load_network_spec(name)
    batch = synthetic_batch(spec, n, seed)
    net = random_network(spec, seed)
    trace = forward(net, batch)
    curv = loss_curvature(net, trace, batch)
    pre = precompute(net, batch, curv, trace, dtype=dtype)
    return Problem(spec, net, batch, trace, curv, pre)


def relative_error(actual, expected):
    actual, expected = np.asarray(actual), np.asarray(expected)
    scale = np.linalg.norm(expected)
    return np.linalg.norm(actual - expected) / (scale if scale > 0 else 1.0)


def random_spd(size, rank, seed, lam=1.0):
    """A PSD matrix of the given rank plus lam I"""
    g = np.random.default_rng(seed).standard_normal((size, rank))
    return g @ g.T + lam * np.eye(size)


def block_diagonal(sizes, seed):
    rng = np.random.default_rng(seed)
    total = sum(sizes)
    out = np.zeros((total, total))
    start = 0
    for s in sizes:
        g = rng.standard_normal((s, s))
        out[start : start + s, start : start + s] = g @ g.T + s * np.eye(s)
        start += s
    return out

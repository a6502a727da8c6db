"""
Importance-sampled estimation of GNH entries.

Data point t is drawn with probability

    P_km(t) = ||v_k(t)|| ||v_m(t)|| / sum_j ||v_k(j)|| ||v_m(j)||

and c draws with replacement give the unbiased estimator

    H~_km = (1/c) sum_s v_k(t_s)^T v_m(t_s) / P_km(t_s).

The 1/n of the loss is carried by R_i (through Q_i), so no extra 1/n
appears here. With probability at least 1 - delta the error is below
(eta / sqrt(c)) ||v_k|| ||v_m|| where eta = 1 + sqrt(8 log(1/delta)).

Every entry draws from its own Philox stream keyed by (seed, min(k, m),
max(k, m), trial), so estimates are reproducible, symmetric in (k, m) and
safe to compute from parallel workers.
"""
import logging
import math

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError
from .precompute import GnhPrecomp, column_norms, entry_exact
from .util import DEFAULT_MEMORY_BUDGET, check_memory, pair_stream


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorConfig(object):
    """
    c: samples per entry
    delta: failure probability of the error bound
    seed: root of every per-entry RNG stream
    """

    c: int = 100
    delta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if int(self.c) < 1:
            raise ConfigError(f"Sample count c must be at least 1, got {self.c}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.seed) < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @property
    def eta(self):
        return 1.0 + math.sqrt(8.0 * math.log(1.0 / self.delta))

    def samples_for(self, epsilon):
        """Smallest c with c >= eta^2 / epsilon^2"""
        return int(math.ceil(self.eta ** 2 / epsilon ** 2))


@dataclass(frozen=True)
class SamplingDistribution(object):
    """
    probs: P_km(t) for every data point
    cumulative: running sums of `probs`, last entry exactly 1
    total_mass: sum_j ||v_k(j)|| ||v_m(j)||
    degenerate: total mass is zero, so the entry is exactly zero
    """

    probs: np.ndarray
    cumulative: np.ndarray
    total_mass: float
    degenerate: bool = False

    def draw(self, rng, count):
        """`count` data indices, with replacement, by binary search"""
        u = rng.random(count)
        picks = np.searchsorted(self.cumulative, u, side="right")
        return np.minimum(picks, len(self.probs) - 1)


@dataclass(frozen=True)
class EntryEstimate(object):
    """
    value: the estimate H~_km
    c_used: samples drawn
    bound: (eta / sqrt(c)) ||v_k|| ||v_m||
    exact: the value is exact (diagonal shortcut, zero mass or n = 1)
    """

    k: int
    m: int
    value: float
    c_used: int
    bound: float
    exact: bool = False


def _from_weights(weights, counter=None):
    if counter is not None:
        counter.add("distribution", len(weights))
    total = float(np.sum(weights))
    if total <= 0.0:
        probs = np.zeros_like(weights)
        return SamplingDistribution(probs, np.zeros_like(weights), 0.0, True)
    probs = weights / total
    cumulative = np.cumsum(probs)
    cumulative /= cumulative[-1]
    return SamplingDistribution(probs, cumulative, total)


def build_distribution(pre: GnhPrecomp, k, m, norms=None, counter=None):
    """
    The sampling distribution for entry (k, m) in O(n) work.

    A zero total mass yields a flagged degenerate distribution.
    """
    norms = norms or column_norms(pre)
    nk = norms.norms(k)
    nm = nk if pre.index(k) == pre.index(m) else norms.norms(m)
    return _from_weights(nk * nm, counter)


def _bound(cfg, nk, nm, c):
    return cfg.eta / math.sqrt(c) * float(np.linalg.norm(nk)) * float(np.linalg.norm(nm))


def _sampled_value(pre, k, m, picks, probs, counter):
    ki, mi = pre.index(k), pre.index(m)
    # v_k(t) for the drawn points only, O(d_L) per draw
    ck = pre.c_tensors[ki.layer][picks, :, ki.row].astype(np.float64)
    cm = pre.c_tensors[mi.layer][picks, :, mi.row].astype(np.float64)
    xk = pre.activations[ki.layer][picks, ki.col]
    xm = pre.activations[mi.layer][picks, mi.col]
    terms = np.sum(ck * cm, axis=1) * xk * xm / probs[picks]
    if counter is not None:
        counter.add("samples", 2 * ck.size + 4 * len(picks))
    return float(np.mean(terms))


def entry_estimate(pre: GnhPrecomp, k, m, cfg: EstimatorConfig, trial=0, norms=None, counter=None):
    """
    Fast Monte Carlo estimate of H_km.

    Diagonal entries use a single sample and are exact; entries whose
    sampling mass vanishes are exactly zero.

    Parameters
    ----------
    trial: int
        Selects an independent stream for repeated estimates of one entry
    """
    norms = norms or column_norms(pre)
    ki, mi = pre.index(k), pre.index(m)
    nk = norms.norms(ki)
    nm = nk if ki == mi else norms.norms(mi)
    dist = _from_weights(nk * nm, counter)
    if dist.degenerate:
        return EntryEstimate(ki.flat, mi.flat, 0.0, 0, 0.0, True)
    if ki == mi:
        # every draw returns sum_j ||v_k(j)||^2
        return EntryEstimate(ki.flat, mi.flat, dist.total_mass, 1, 0.0, True)
    c = int(cfg.c)
    picks = dist.draw(pair_stream(cfg.seed, ki.flat, mi.flat, trial), c)
    value = _sampled_value(pre, ki, mi, picks, dist.probs, counter)
    return EntryEstimate(ki.flat, mi.flat, value, c, _bound(cfg, nk, nm, c), pre.n == 1)


def uniform_baseline_estimate(pre: GnhPrecomp, k, m, cfg: EstimatorConfig, trial=0, norms=None, counter=None):
    """
    The same estimator with P(t) = 1/n; a reference for the importance
    weights only.
    """
    norms = norms or column_norms(pre)
    ki, mi = pre.index(k), pre.index(m)
    n = pre.n
    probs = np.full(n, 1.0 / n)
    dist = SamplingDistribution(probs, np.cumsum(probs) / np.sum(probs), 1.0)
    if counter is not None:
        counter.add("distribution", n)
    c = int(cfg.c)
    picks = dist.draw(pair_stream(cfg.seed, ki.flat, mi.flat, trial), c)
    value = _sampled_value(pre, ki, mi, picks, probs, counter)
    nk, nm = norms.norms(ki), norms.norms(mi)
    return EntryEstimate(ki.flat, mi.flat, value, c, _bound(cfg, nk, nm, c), n == 1)


ESTIMATORS = {"fmc": entry_estimate, "uniform": uniform_baseline_estimate}


def matrix_estimate(
    pre: GnhPrecomp,
    cfg: EstimatorConfig,
    indices=None,
    scheme="fmc",
    threads=1,
    memory_budget=DEFAULT_MEMORY_BUDGET,
):
    """
    Estimated GNH restricted to `indices` (all N weights by default).

    Each unordered pair is estimated once and mirrored, so the result is
    symmetric; the diagonal is exact.

    Raises
    ------
    ResourceError
        If the dense result would exceed `memory_budget`
    """
    indices = np.arange(pre.size) if indices is None else np.asarray(indices, dtype=int)
    size = len(indices)
    check_memory(size * size * 8, memory_budget, "Estimated GNH matrix")
    estimator = ESTIMATORS[scheme]
    norms = column_norms(pre)
    result = np.empty((size, size))

    def row(a):
        k = int(indices[a])
        return a, [estimator(pre, k, int(indices[b]), cfg, norms=norms).value for b in range(a, size)]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for a, values in pool.map(row, range(size)):
            result[a, a:] = values
            result[a:, a] = values
    logger.debug("Estimated %d x %d GNH block with c=%d (%s)", size, size, cfg.c, scheme)
    return result


@dataclass(frozen=True)
class ConcentrationResult(object):
    failure_rate: float
    trials: int
    bound: float
    exact_value: float
    estimates: np.ndarray


def concentration_test(pre: GnhPrecomp, k, m, cfg: EstimatorConfig, trials=1000, scheme="fmc"):
    """
    Fraction of `trials` independent estimates whose error exceeds
    (eta / sqrt(c)) ||v_k|| ||v_m||. The bound holds with probability at
    least 1 - delta, so the rate should not exceed cfg.delta.
    """
    if trials < 100:
        raise ConfigError(f"Need at least 100 trials for a failure rate, got {trials}")
    norms = column_norms(pre)
    exact = entry_exact(pre, k, m)
    estimator = ESTIMATORS[scheme]
    bound = _bound(cfg, norms.norms(k), norms.norms(m), int(cfg.c))
    estimates = np.array(
        [estimator(pre, k, m, cfg, trial=t, norms=norms).value for t in range(trials)]
    )
    failures = np.abs(estimates - exact) > bound
    return ConcentrationResult(float(np.mean(failures)), trials, bound, exact, estimates)


def with_seed(cfg: EstimatorConfig, seed):
    return replace(cfg, seed=int(seed))

try:
    import pandas as pd
except ImportError:
    raise ImportError(
        "Please run `pip install fastgnh[analysis]` if you "
        "would like to use the fastgnh analysis module."
    )

import logging

import numpy as np

from fastgnh.analysis.problem import Problem, build_problem
from fastgnh.analysis.report import ExperimentReport
from fastgnh.config import ExperimentConfig
from fastgnh.exceptions import ConfigError
from fastgnh.hmatrix.oracle import EntryOracle
from fastgnh.sampling import ESTIMATORS, matrix_estimate
from fastgnh.util import loglog_slope, rng_stream


logger = logging.getLogger(__name__)


def entry_subset(size, entries, seed):
    """
    The weight indices a convergence run is measured on: all of them when
    N <= `entries`, otherwise `entries` distinct indices, sorted.
    """
    if entries <= 0 or entries >= size:
        return np.arange(size)
    return np.sort(rng_stream(seed).choice(size, size=entries, replace=False))


class SamplingConvergence(object):
    """
    Relative Frobenius error of the sampled GNH against the exact one, for a
    grid of sample counts c, several seeds and both sampling schemes.

    Attributes
    ----------
    errors: DataFrame
        Columns scheme, c, seed, error
    indices: ndarray
        Weight indices of the measured principal submatrix
    """

    def __init__(self, problem: Problem, cfg: ExperimentConfig, schemes=("fmc", "uniform")):
        """
        Parameters
        ----------
        problem: Problem
            Must carry a precomputation
        cfg: ExperimentConfig
            Supplies c_grid, seeds, entries, delta, seed and threads
        schemes: Tuple[str]
            Any of the keys of `fastgnh.sampling.ESTIMATORS`
        """
        if problem.pre is None:
            raise ConfigError("SamplingConvergence needs a precomputed problem")
        unknown = set(schemes) - set(ESTIMATORS)
        if unknown:
            raise ConfigError(f"Unknown sampling schemes {sorted(unknown)}")
        if cfg.seeds < 1:
            raise ConfigError(f"seeds must be at least 1, got {cfg.seeds}")
        self.problem = problem
        self.cfg = cfg
        self.schemes = tuple(schemes)
        self.indices = entry_subset(problem.size, cfg.entries, cfg.seed)
        exact = EntryOracle.exact(problem.pre, lam=0.0)
        self.exact = exact.block(self.indices, self.indices)
        self.errors = None

    def run(self):
        pre, cfg = self.problem.pre, self.cfg
        scale = np.linalg.norm(self.exact)
        rows = []
        for scheme in self.schemes:
            for c in cfg.c_values():
                for s in range(cfg.seeds):
                    estimator = cfg.estimator(c=c, seed=cfg.seed + s)
                    estimate = matrix_estimate(
                        pre, estimator, self.indices, scheme, cfg.threads, cfg.memory_budget
                    )
                    error = np.linalg.norm(estimate - self.exact)
                    rows.append(
                        {
                            "scheme": scheme,
                            "c": int(c),
                            "seed": cfg.seed + s,
                            "error": float(error / scale) if scale > 0 else float(error),
                        }
                    )
                logger.info("%s c=%d done", scheme, c)
        self.errors = pd.DataFrame(rows, columns=["scheme", "c", "seed", "error"])
        return self.errors

    @property
    def median_errors(self):
        """Median error per (scheme, c)"""
        return self.errors.groupby(["scheme", "c"])["error"].median().unstack(level=0)

    def slopes(self):
        """Fitted log-log slope of median error against c, per scheme"""
        medians = self.median_errors
        if len(medians.index) < 2:
            return {scheme: None for scheme in medians.columns}
        return {
            scheme: loglog_slope(medians.index.values, medians[scheme].values)
            if np.all(medians[scheme].values > 0)
            else None
            for scheme in medians.columns
        }

    def win_rate(self, scheme="fmc", baseline="uniform", c=None):
        """
        Fraction of (c, seed) runs where `scheme` is no worse than `baseline`,
        restricted to one sample count when `c` is given
        """
        errors = self.errors if c is None else self.errors[self.errors["c"] == c]
        table = errors.pivot_table(index=["c", "seed"], columns="scheme", values="error")
        if scheme not in table or baseline not in table:
            return None
        return float(np.mean(table[scheme].values <= table[baseline].values))

    def summary(self):
        medians = self.median_errors
        c_values = list(medians.index)
        summary = {
            "N": self.problem.size,
            "entries": len(self.indices),
            "slopes": self.slopes(),
            "median_errors": {
                scheme: dict(zip(map(str, c_values), medians[scheme].values))
                for scheme in medians.columns
            },
            "fmc_win_rate": self.win_rate(),
            "fmc_win_rate_by_c": {str(c): self.win_rate(c=c) for c in c_values},
        }
        if len(c_values) >= 2:
            summary["error_ratio"] = {
                scheme: float(medians[scheme].iloc[-1] / medians[scheme].iloc[0])
                if medians[scheme].iloc[0] > 0
                else None
                for scheme in medians.columns
            }
        return summary


def run_convergence(cfg: ExperimentConfig, problem: Problem = None) -> ExperimentReport:
    """
    Sampling-error convergence experiment. Builds the problem from `cfg`
    unless one is passed in.
    """
    problem = problem or build_problem(cfg)
    experiment = SamplingConvergence(problem, cfg)
    table = experiment.run()
    return ExperimentReport("convergence", table, experiment.summary(), cfg.to_dict())

try:
    import pandas as pd
except ImportError:
    raise ImportError(
        "Please run `pip install fastgnh[analysis]` if you "
        "would like to use the fastgnh analysis module."
    )

import logging
import time

import numpy as np

from fastgnh.analysis.problem import Problem, build_problem
from fastgnh.analysis.report import ExperimentReport
from fastgnh.baselines import kfac_build, matched_budget, rsvd
from fastgnh.config import ExperimentConfig
from fastgnh.exceptions import ConfigError
from fastgnh.hmatrix.compress import build_hmatrix, probe_error, recount_storage
from fastgnh.hmatrix.oracle import EntryOracle
from fastgnh.operators import MatrixFreeGnh
from fastgnh.sampling import matrix_estimate
from fastgnh.util import median_time, rng_stream


logger = logging.getLogger(__name__)

COLUMNS = [
    "method",
    "preset",
    "t_build",
    "t_matv",
    "percent_k",
    "storage_percent_k",
    "eps_f",
    "rank",
    "samples",
]


class CompressionComparison(object):
    """
    H-matrix presets against RSVD and K-FAC at a matched budget.

    For every preset the H-matrix is built from the exact entry oracle; its
    %K fixes the RSVD rank r (smallest with r/N above %K) and the K-FAC
    sample count k = r. Errors are relative Frobenius errors against
    H + lam I on a Gaussian probe block.

    Attributes
    ----------
    results: DataFrame
        One row per (method, preset), columns as in `COLUMNS`
    hmatrices: Dict[str, HMatrix]
        The built H-matrix of each preset
    """

    def __init__(self, problem: Problem, cfg: ExperimentConfig, baselines=True):
        if problem.pre is None:
            raise ConfigError("CompressionComparison needs a precomputed problem")
        self.problem = problem
        self.cfg = cfg
        self.baselines = baselines
        self.reference = problem.matvec(cfg.lam)
        self.probe_block = rng_stream(cfg.seed).standard_normal((problem.size, cfg.probes))
        self.hmatrices = {}
        self.results = None

    def _matvec_time(self, op):
        seconds, _ = median_time(lambda: op.matvec(self.probe_block))
        return seconds

    def _error(self, op):
        return probe_error(op, self.reference, self.cfg.probes, self.cfg.seed)

    def _hmatrix_row(self, name):
        cfg = self.cfg
        oracle = EntryOracle.exact(self.problem.pre, cfg.lam)
        preset = cfg.preset(name, self.problem.size)
        start = time.perf_counter()
        hm = build_hmatrix(oracle, preset, cfg.seed, cfg.metric, cfg.threads)
        t_build = time.perf_counter() - start
        if recount_storage(hm) != hm.stored_entries:
            logger.warning("Stored-entry recount disagrees for preset %s", name)
        self.hmatrices[name] = hm
        stats = hm.stats()
        return {
            "method": "hmatrix",
            "preset": name,
            "t_build": t_build,
            "t_matv": self._matvec_time(hm),
            "percent_k": stats["percent_k"],
            "storage_percent_k": stats["percent_k"],
            "eps_f": self._error(hm),
            "rank": stats["max_rank_used"],
            "samples": 0,
        }

    def _rsvd_row(self, name, budget):
        cfg, size = self.cfg, self.problem.size
        h_matvec = self.problem.matvec(0.0)
        start = time.perf_counter()
        approx = rsvd(h_matvec, size, budget.rank, seed=cfg.seed, lam=cfg.lam)
        t_build = time.perf_counter() - start
        return {
            "method": "rsvd",
            "preset": name,
            "t_build": t_build,
            "t_matv": self._matvec_time(approx),
            "percent_k": 100.0 * approx.rank / size,
            "storage_percent_k": 100.0 * approx.compression_rate,
            "eps_f": self._error(approx),
            "rank": approx.rank,
            "samples": 0,
        }

    def _kfac_row(self, name, budget):
        cfg, size = self.cfg, self.problem.size
        start = time.perf_counter()
        approx = kfac_build(self.problem.net, self.problem.batch, budget.samples, cfg.seed)
        t_build = time.perf_counter() - start
        approx.lam = cfg.lam
        return {
            "method": "kfac",
            "preset": name,
            "t_build": t_build,
            # k back-propagations per data point
            "percent_k": 100.0 * budget.samples / size,
            "storage_percent_k": 100.0 * approx.compression_rate,
            "t_matv": self._matvec_time(approx),
            "eps_f": self._error(approx),
            "rank": 0,
            "samples": budget.samples,
        }

    def _matrix_free_row(self):
        problem = self.problem
        op = MatrixFreeGnh(problem.net, problem.trace, problem.curv, self.cfg.lam)
        return {
            "method": "mf",
            "preset": "",
            "t_build": 0.0,
            "t_matv": self._matvec_time(op),
            "percent_k": 0.0,
            "storage_percent_k": 0.0,
            "eps_f": self._error(op),
            "rank": 0,
            "samples": 0,
        }

    def run(self):
        rows = []
        for name in self.cfg.preset_names():
            row = self._hmatrix_row(name)
            rows.append(row)
            logger.info("hmatrix/%s: %.2f%%K eps=%.3e", name, row["percent_k"], row["eps_f"])
            if self.baselines:
                budget = matched_budget(row["percent_k"] / 100.0, self.problem.size)
                rows.append(self._rsvd_row(name, budget))
                rows.append(self._kfac_row(name, budget))
        if self.baselines:
            rows.append(self._matrix_free_row())
        self.results = pd.DataFrame(rows, columns=COLUMNS)
        return self.results

    def summary(self):
        table = self.results
        summary = {"N": self.problem.size, "presets": {}}
        for name, hm in self.hmatrices.items():
            rows = table[table["preset"] == name].set_index("method")
            entry = {
                "stats": hm.stats(),
                "recount_matches": recount_storage(hm) == hm.stored_entries,
            }
            for method in ("rsvd", "kfac"):
                if method in rows.index:
                    entry[f"hmatrix_beats_{method}"] = bool(
                        rows.loc["hmatrix", "eps_f"] <= rows.loc[method, "eps_f"]
                    )
            summary["presets"][name] = entry
        return summary


def run_compression(cfg: ExperimentConfig, problem: Problem = None, baselines=True) -> ExperimentReport:
    """Build cost, matvec cost, %K and error of every preset and baseline"""
    problem = problem or build_problem(cfg)
    comparison = CompressionComparison(problem, cfg, baselines)
    table = comparison.run()
    return ExperimentReport("compression", table, comparison.summary(), cfg.to_dict())


class SampledCompression(object):
    """
    H-matrices built from the sampled entry oracle.

    For every preset and every c in the grid, reports the compression error
    against the exact H + lam I next to the error of the exact-oracle
    H-matrix of the same preset, and the sampling error of the estimated
    matrix itself when it fits in memory.
    """

    def __init__(self, problem: Problem, cfg: ExperimentConfig):
        if problem.pre is None:
            raise ConfigError("SampledCompression needs a precomputed problem")
        self.problem = problem
        self.cfg = cfg
        self.reference = problem.matvec(cfg.lam)
        self.results = None

    def _sampling_error(self, c):
        pre, cfg = self.problem.pre, self.cfg
        size = self.problem.size
        if size * size * 8 > cfg.memory_budget // 4:
            return float("nan")
        exact = EntryOracle.exact(pre, lam=0.0)
        indices = np.arange(size)
        reference = exact.block(indices, indices)
        estimate = matrix_estimate(pre, cfg.estimator(c=c), threads=cfg.threads)
        return float(np.linalg.norm(estimate - reference) / np.linalg.norm(reference))

    def run(self):
        cfg, pre = self.cfg, self.problem.pre
        rows = []
        for name in cfg.preset_names():
            preset = cfg.preset(name, self.problem.size)
            exact = build_hmatrix(EntryOracle.exact(pre, cfg.lam), preset, cfg.seed, cfg.metric, cfg.threads)
            eps_exact = probe_error(exact, self.reference, cfg.probes, cfg.seed)
            for c in cfg.c_values():
                oracle = EntryOracle.sampled(pre, cfg.estimator(c=c), cfg.lam, cfg.threads)
                start = time.perf_counter()
                hm = build_hmatrix(oracle, preset, cfg.seed, cfg.metric, cfg.threads)
                rows.append(
                    {
                        "preset": name,
                        "c": int(c),
                        "t_build": time.perf_counter() - start,
                        "percent_k": 100.0 * hm.compression_rate,
                        "eps_f": probe_error(hm, self.reference, cfg.probes, cfg.seed),
                        "eps_exact_oracle": eps_exact,
                        "sampling_error": self._sampling_error(c),
                    }
                )
                logger.info("sampled hmatrix/%s c=%d: eps=%.3e", name, c, rows[-1]["eps_f"])
        self.results = pd.DataFrame(rows)
        return self.results


def run_sampled_compression(cfg: ExperimentConfig, problem: Problem = None) -> ExperimentReport:
    problem = problem or build_problem(cfg)
    experiment = SampledCompression(problem, cfg)
    table = experiment.run()
    summary = {"N": problem.size}
    return ExperimentReport("compare-sampled", table, summary, cfg.to_dict())

import json

import jsonschema
import numpy as np
import pytest

pd = pytest.importorskip("pandas")

from fastgnh.analysis import (
    CompressionComparison,
    SampledCompression,
    build_problem,
    run_compression,
    run_sampled_compression,
)
from fastgnh.analysis.compression import COLUMNS
from fastgnh.config import ExperimentConfig
from fastgnh.exceptions import ConfigError

from .report_schema import REPORT_SCHEMA


@pytest.fixture(scope="module")
def small_config():
    return ExperimentConfig(
        network="tiny-ce",
        n=40,
        presets="low,high",
        probes=16,
        lam=1e-3,
        c_grid="50",
        seed=1,
    )


@pytest.fixture(scope="module")
def problem(small_config):
    return build_problem(small_config)


@pytest.fixture(scope="module")
def comparison(problem, small_config):
    experiment = CompressionComparison(problem, small_config)
    experiment.run()
    return experiment


class TestCompressionComparison:
    def test_rows(self, comparison):
        table = comparison.results
        assert list(table.columns) == COLUMNS
        assert table["method"].tolist() == ["hmatrix", "rsvd", "kfac", "hmatrix", "rsvd", "kfac", "mf"]
        assert (table["eps_f"] >= 0).all()

    def test_matched_budget(self, comparison, problem):
        table = comparison.results
        for preset in ("low", "high"):
            rows = table[table["preset"] == preset].set_index("method")
            rank = rows.loc["rsvd", "rank"]
            assert rank / problem.size > rows.loc["hmatrix", "percent_k"] / 100.0
            assert rows.loc["kfac", "samples"] == rank

    def test_matrix_free_is_exact(self, comparison):
        row = comparison.results.set_index("method").loc["mf"]
        assert row["eps_f"] <= 1e-12
        assert row["percent_k"] == 0.0

    def test_high_is_more_accurate(self, comparison):
        table = comparison.results.set_index(["method", "preset"])
        assert table.loc[("hmatrix", "high"), "eps_f"] <= table.loc[("hmatrix", "low"), "eps_f"]

    def test_summary(self, comparison):
        summary = comparison.summary()
        for name in ("low", "high"):
            entry = summary["presets"][name]
            assert entry["recount_matches"]
            assert "hmatrix_beats_rsvd" in entry
            assert "hmatrix_beats_kfac" in entry

    def test_needs_precompute(self, small_config):
        with pytest.raises(ConfigError):
            CompressionComparison(build_problem(small_config, with_precompute=False), small_config)


class TestRunCompression:
    def test_without_baselines(self, small_config, problem, tmpdir):
        report = run_compression(small_config, problem, baselines=False)
        assert report.table["method"].tolist() == ["hmatrix", "hmatrix"]
        path = str(tmpdir.join("report.json"))
        report.save(None, path)
        with open(path) as fh:
            saved = json.load(fh)
        jsonschema.validate(saved, REPORT_SCHEMA)
        assert saved["experiment"] == "compression"


class TestSampledCompression:
    def test_rows(self, small_config, problem):
        experiment = SampledCompression(problem, small_config.updated(presets="low", c_grid="20,200"))
        table = experiment.run()
        assert table["c"].tolist() == [20, 200]
        assert table["sampling_error"].iloc[1] < table["sampling_error"].iloc[0]
        assert np.all(table["eps_exact_oracle"] == table["eps_exact_oracle"].iloc[0])

    def test_report(self, small_config, problem):
        report = run_sampled_compression(small_config.updated(presets="low"), problem)
        assert report.experiment == "compare-sampled"
        jsonschema.validate(report.to_dict(), REPORT_SCHEMA)

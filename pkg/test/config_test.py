import json

import pytest

from fastgnh.config import CONFIG_ENV, ExperimentConfig
from fastgnh.exceptions import ConfigError
from fastgnh.hmatrix import PRESETS


def write(tmpdir, text, name="experiment.cfg"):
    path = tmpdir.join(name)
    path.write(text)
    return str(path)


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.network == "desk-classifier"
        assert cfg.network_spec().size == 1992
        assert cfg.c_values() == [100, 1000, 10000]
        assert cfg.preset_names() == ["low", "high"]

    def test_key_value_file(self, tmpdir):
        path = write(tmpdir, "# comment\nnetwork = tiny-ce\nn=40  # trailing\n\nc_grid=10,100\ntol=1e-4\n")
        cfg = ExperimentConfig.from_file(path)
        assert cfg.network == "tiny-ce"
        assert cfg.n == 40
        assert cfg.c_values() == [10, 100]
        assert cfg.tol == 1e-4

    def test_unknown_key(self, tmpdir):
        with pytest.raises(ConfigError, match="Unknown configuration key 'colour'"):
            ExperimentConfig.from_file(write(tmpdir, "colour=blue\n"))

    def test_malformed_line(self, tmpdir):
        with pytest.raises(ConfigError, match=":2:"):
            ExperimentConfig.from_file(write(tmpdir, "n=4\nnetwork\n"))

    def test_wrong_type(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().updated(n="many")

    def test_missing_file(self, tmpdir):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(str(tmpdir.join("absent.cfg")))

    def test_report_reload(self, tmpdir):
        original = ExperimentConfig(network="tiny-mse", n=12, seeds=3)
        report = {"experiment": "convergence", "config": original.to_dict(), "rows": []}
        path = write(tmpdir, json.dumps(report), "report.json")
        assert ExperimentConfig.from_file(path) == original

    def test_save_round_trip(self, tmpdir):
        original = ExperimentConfig(network="tiny-ce", lam=0.25, presets="custom")
        path = str(tmpdir.join("saved.cfg"))
        original.save(path)
        assert ExperimentConfig.from_file(path) == original

    def test_load_precedence(self, tmpdir, monkeypatch):
        env_file = write(tmpdir, "n=30\nseed=4\n", "env.cfg")
        flag_file = write(tmpdir, "n=50\n", "flag.cfg")
        monkeypatch.setenv(CONFIG_ENV, env_file)
        assert ExperimentConfig.load().n == 30
        assert ExperimentConfig.load(flag_file).n == 50
        cfg = ExperimentConfig.load(None, n=7, seed=None)
        assert cfg.n == 7
        assert cfg.seed == 4

    def test_explicit_layers(self):
        cfg = ExperimentConfig(layers="5,4,2", activation="softplus,identity", bias_mode="none")
        assert cfg.network_spec().size == 28

    def test_estimator(self):
        cfg = ExperimentConfig(c=50, delta=0.2, seed=9)
        assert cfg.estimator().c == 50
        assert cfg.estimator(c=10, seed=1).seed == 1

    def test_presets(self):
        assert ExperimentConfig().preset("low", 10 ** 6) == PRESETS["low"]
        custom = ExperimentConfig(leaf_size=8, max_rank=4, tol=1e-3).preset("custom", 100)
        assert (custom.leaf_size, custom.max_rank, custom.tol) == (8, 4, 1e-3)
        with pytest.raises(ConfigError):
            ExperimentConfig().preset("custom", 100)

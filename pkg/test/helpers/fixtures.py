import pytest

from click.testing import CliRunner

from fastgnh.checkpoint import save_batch, save_network, save_precomp

from .util import make_problem


@pytest.fixture(scope="session")
def temp_config_file(tmpdir_factory):
    path = tmpdir_factory.mktemp("config").join("experiment.cfg")
    with open(str(path), "w") as f:
        f.write("# test configuration\n")
        f.write("network=tiny-ce\n")
        f.write("n=40\n")
        f.write("seeds=2\n")
        f.write("entries=12\n")
        f.write("c_grid=10,100\n")
        f.write("presets=custom\n")
        f.write("leaf_size=8\n")
        f.write("max_rank=8\n")
        f.write("tol=1e-6\n")
        f.write("probes=16\n")
    return path


@pytest.fixture
def cli_test_runner(temp_config_file):
    runner = CliRunner(env={"FASTGNH_CONFIG": str(temp_config_file)}, mix_stderr=False)
    yield runner


@pytest.fixture(scope="session")
def saved_problem(tmpdir_factory):
    """tiny-ce network, batch and precomputation written to disk"""
    directory = tmpdir_factory.mktemp("problem")
    problem = make_problem("tiny-ce", 24, 5)
    paths = {
        "network": str(directory.join("net.fgnh")),
        "batch": str(directory.join("batch.fgnh")),
        "precomp": str(directory.join("pre.fgnh")),
        "dir": directory,
    }
    save_network(problem.net, paths["network"])
    save_batch(problem.batch, paths["batch"])
    save_precomp(problem.pre, paths["precomp"])
    return problem, paths

#!/usr/bin/env python3
import json
import logging
import sys

from contextlib import contextmanager

import click

from fastgnh import commands
from fastgnh.config import CONFIG_ENV, ExperimentConfig
from fastgnh.exceptions import FastGnhError
from fastgnh.hmatrix.oracle import METRICS
from fastgnh.sampling import ESTIMATORS
from fastgnh.util import jsonable
from fastgnh.version import __version__


class ContextObject(object):
    """Object passed along Click context
    Note: `ctx` is passed along whenever the @click.pass_context decorator is
    present. This object is referenced using `ctx.obj`
    """

    def __init__(self, config=None, threads=None):
        self.config = config
        self.threads = threads

    def experiment_config(self, **overrides):
        """Flag values override the configuration file; None means unset"""
        return ExperimentConfig.load(self.config, threads=self.threads, **overrides)


@contextmanager
def _exit_on_error():
    """Echoes library errors to stderr and exits with their code"""
    try:
        yield
    except FastGnhError as err:
        click.echo(f"Error: {err}", err=True)
        sys.exit(err.exit_code)


def _echo_json(data):
    click.echo(json.dumps(jsonable(data), indent=2))


def _seed_option(f):
    return click.option(
        "--seed", type=int, required=True, help="Seed of every random stream the command uses."
    )(f)


_CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])


@click.group(context_settings=_CONTEXT_SETTINGS)
@click.option(
    "--config",
    envvar=CONFIG_ENV,
    default=None,
    type=click.Path(dir_okay=False),
    help="Specify a key=value configuration file (or a JSON report to re-run).",
)
@click.option("--threads", type=int, default=None, help="Maximum worker threads.")
@click.option("--verbose", "-v", is_flag=True, help="Log progress at debug level.")
@click.version_option(version=__version__, prog_name="fastgnh")
@click.pass_context
def cli(ctx, config, threads, verbose):
    """Exact and sampled Gauss-Newton Hessian entries, hierarchical
    compression and curvature solves for fully-connected networks.

    Note: settings resolve as --flag, then the configuration file (--config
    or $FASTGNH_CONFIG), then defaults.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    ctx.obj = ContextObject(config, threads)


@cli.command("ingest")
@click.argument("fmt", type=click.Choice(["mnist", "cifar"]), metavar="FORMAT")
@click.argument("images", metavar="IMAGES")
@click.option("--labels", help="IDX label file (MNIST classifiers only).")
@click.option("--autoencoder", is_flag=True, help="Use the inputs as labels.")
@click.option("--n", type=int, default=None, help="Subsample this many data points.")
@click.option("--seed", type=int, default=None, help="Subsampling seed, required with --n.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
def ingest_cmd(fmt, images, labels, autoencoder, n, seed, output):
    """Convert an MNIST or CIFAR-10 dataset into a batch file.

    IMAGES is an IDX image file for MNIST or a comma separated list of
    binary batch files for CIFAR-10.
    """
    if n is not None and seed is None:
        raise click.UsageError("--seed is required when subsampling with --n")
    with _exit_on_error():
        batch = commands.ingest(fmt, images, output, labels, autoencoder, n, seed or 0)
    click.echo(f"Wrote {batch.n} data points to {output}")


@cli.command("gen")
@click.option("--network", help="Canned network name.")
@click.option("--layers", help="Explicit layer sizes, e.g. 20,60,12.")
@click.option("--n", type=int, default=None, help="Number of data points.")
@click.option("--warmup-steps", type=int, default=None, help="SGD steps before saving.")
@_seed_option
@click.option("--batch-out", required=True, type=click.Path(dir_okay=False))
@click.option("--network-out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def gen_cmd(ctx, network, layers, n, warmup_steps, seed, batch_out, network_out):
    """Generate a synthetic batch and a random network."""
    with _exit_on_error():
        cfg = ctx.obj.experiment_config(
            network=network, layers=layers, n=n, warmup_steps=warmup_steps, seed=seed
        )
        batch, net, report = commands.gen(cfg, batch_out, network_out)
    click.echo(f"Generated {net!r} with n={batch.n}")
    if report is not None:
        _echo_json(report.to_dict())


@cli.command("train")
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("batch", type=click.Path(exists=True, dir_okay=False))
@click.option("--steps", type=int, required=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@_seed_option
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
def train_cmd(network, batch, steps, lr, batch_size, seed, output):
    """Warm up a network with plain SGD on a batch."""
    with _exit_on_error():
        report = commands.train(network, batch, output, steps, lr, batch_size, seed)
    _echo_json(report.to_dict())


@cli.command("precompute")
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("batch", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", type=click.Path(dir_okay=False))
@click.option("--dtype", type=click.Choice(sorted(commands.DTYPES)), default="double", show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), help="Reuse earlier precomputations.")
@click.option("--memory-budget", type=int, default=None, help="Byte budget for the C tensors.")
def precompute_cmd(network, batch, output, dtype, cache_dir, memory_budget):
    """Precompute the C tensors of a network on a batch."""
    if not output and not cache_dir:
        raise click.UsageError("Give --output, --cache-dir or both")
    with _exit_on_error():
        pre = commands.precompute(network, batch, output, dtype, cache_dir, memory_budget)
    click.echo(f"Precomputed N={pre.size}, n={pre.n}: {pre.storage_count} numbers ({pre.nbytes} bytes)")


@cli.command("entry")
@click.argument("precomp", type=click.Path(exists=True, dir_okay=False))
@click.argument("k", type=int)
@click.argument("m", type=int)
@click.option("--c", type=int, default=100, show_default=True, help="Samples per entry.")
@click.option("--delta", type=float, default=0.1, show_default=True, help="Failure probability of the bound.")
@_seed_option
@click.option("--exact", is_flag=True, help="Evaluate the entry exactly.")
@click.option("--trials", type=int, default=0, help="Run a concentration test with this many trials.")
@click.option("--scheme", type=click.Choice(sorted(ESTIMATORS)), default="fmc", show_default=True)
def entry_cmd(precomp, k, m, c, delta, seed, exact, trials, scheme):
    """Estimate (or evaluate) the GNH entry H[K, M], 0-based."""
    with _exit_on_error():
        estimator = ExperimentConfig(c=c, delta=delta, seed=seed).estimator()
        result = commands.entry(precomp, k, m, estimator, exact, trials, scheme)
    _echo_json(result)


@cli.command("sample")
@click.argument("precomp", type=click.Path(exists=True, dir_okay=False))
@click.option("--c", type=int, default=100, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@_seed_option
@click.option("--indices", help="Comma separated weight indices (default all).")
@click.option("--scheme", type=click.Choice(sorted(ESTIMATORS)), default="fmc", show_default=True)
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def sample_cmd(ctx, precomp, c, delta, seed, indices, scheme, output):
    """Estimate a principal submatrix of the GNH and write it as CSV."""
    with _exit_on_error():
        estimator = ExperimentConfig(c=c, delta=delta, seed=seed).estimator()
        table = commands.sample(precomp, estimator, output, indices, scheme, ctx.obj.threads or 1)
    click.echo(f"Wrote {len(table)} x {len(table)} estimate to {output}")


@cli.command("build-hmatrix")
@click.argument("precomp", type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=click.Choice(["low", "high", "custom"]), default="low", show_default=True)
@click.option("--leaf-size", type=int, default=None, help="Leaf size m.")
@click.option("--max-rank", type=int, default=None, help="Rank cap r_o.")
@click.option("--tol", type=float, default=None, help="Relative tolerance tau.")
@click.option("--lam", type=float, default=None, help="Diagonal regularization.")
@click.option("--metric", type=click.Choice(METRICS), default=None)
@click.option("--oracle", type=click.Choice(["exact", "sampled"]), default="exact", show_default=True)
@click.option("--c", type=int, default=None, help="Samples per entry for the sampled oracle.")
@_seed_option
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--stats", type=click.Path(dir_okay=False), help="Write the stats report here.")
@click.pass_context
def build_hmatrix_cmd(ctx, precomp, preset, leaf_size, max_rank, tol, lam, metric, oracle, c, seed, output, stats):
    """Compress the regularized GNH into an H-matrix."""
    with _exit_on_error():
        cfg = ctx.obj.experiment_config(
            leaf_size=leaf_size, max_rank=max_rank, tol=tol, lam=lam, metric=metric, c=c, seed=seed
        )
        hm = commands.build(precomp, output, cfg, preset, oracle)
    report = {"config": cfg.to_dict(), "stats": hm.stats()}
    if stats:
        with open(stats, "w") as fh:
            fh.write(json.dumps(jsonable(report), indent=2))
    _echo_json(report["stats"])


@cli.command("probe")
@click.argument("hmatrix", type=click.Path(exists=True, dir_okay=False))
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("batch", type=click.Path(exists=True, dir_okay=False))
@click.option("--probes", type=int, default=128, show_default=True)
@_seed_option
@click.option("--dense", is_flag=True, help="Compare against the assembled GNH.")
def probe_cmd(hmatrix, network, batch, probes, seed, dense):
    """Estimate the relative Frobenius error of an H-matrix."""
    with _exit_on_error():
        result = commands.probe(hmatrix, network, batch, probes, seed, dense)
    _echo_json(result)


@cli.command("solve")
@click.argument("network", type=click.Path(exists=True, dir_okay=False))
@click.argument("batch", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(commands.SOLVE_METHODS), default="pcg", show_default=True)
@click.option("--hmatrix", type=click.Path(exists=True, dir_okay=False))
@click.option("--rhs", type=click.Choice(["gradient", "random"]), default="gradient", show_default=True)
@click.option("--lam", type=float, default=None, help="Defaults to the H-matrix regularization.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--maxit", type=int, default=None)
@click.option("--samples", type=int, default=1, show_default=True, help="K-FAC labels per data point.")
@_seed_option
def solve_cmd(network, batch, method, hmatrix, rhs, lam, tol, maxit, samples, seed):
    """Solve (H + lam I) x = b and report the residual."""
    with _exit_on_error():
        _, summary = commands.solve(method, network, batch, hmatrix, rhs, lam, tol, maxit, seed, samples)
    _echo_json(summary)


def _experiment_options(f):
    for option in reversed(
        [
            click.option("--network", help="Canned network name."),
            click.option("--layers", help="Explicit layer sizes."),
            click.option("--dataset", type=click.Choice(["synthetic", "mnist", "cifar"]), default=None),
            click.option("--images", help="Image file(s) for mnist or cifar."),
            click.option("--labels", help="Label file for mnist."),
            click.option("--n", type=int, default=None, help="Number of data points."),
            click.option("--warmup-steps", type=int, default=None),
            click.option("--output", "-o", type=click.Path(dir_okay=False), help="CSV table."),
            click.option("--report", type=click.Path(dir_okay=False), help="JSON report."),
        ]
    ):
        f = option(f)
    return f


def _run_experiment(run, cfg, *args, **kwargs):
    with _exit_on_error():
        report = run(cfg, *args, **kwargs)
        report.save(cfg.output or None, cfg.report or None)
    if not cfg.output:
        click.echo(report.table.to_csv(index=False))
    _echo_json(report.summary)


@cli.command("convergence")
@_experiment_options
@click.option("--c-grid", help="Comma separated sample counts.")
@click.option("--seeds", type=int, default=None, help="Repetitions per sample count.")
@click.option("--entries", type=int, default=None, help="Size of the measured index set.")
@_seed_option
@click.pass_context
def convergence_cmd(ctx, seed, **options):
    """Sampling error against c, importance vs uniform sampling."""
    from fastgnh.analysis import run_convergence

    with _exit_on_error():
        cfg = ctx.obj.experiment_config(seed=seed, **options)
    _run_experiment(run_convergence, cfg)


@cli.command("compare")
@_experiment_options
@click.option("--presets", help="Comma separated preset names.")
@click.option("--probes", type=int, default=None)
@click.option("--lam", type=float, default=None)
@click.option("--no-baselines", is_flag=True, help="Skip RSVD, K-FAC and matrix-free rows.")
@_seed_option
@click.pass_context
def compare_cmd(ctx, seed, no_baselines, **options):
    """H-matrix presets against RSVD and K-FAC at matched %K."""
    from fastgnh.analysis import run_compression

    with _exit_on_error():
        cfg = ctx.obj.experiment_config(seed=seed, **options)
    _run_experiment(run_compression, cfg, baselines=not no_baselines)


@cli.command("compare-sampled")
@_experiment_options
@click.option("--presets", help="Comma separated preset names.")
@click.option("--c-grid", help="Comma separated sample counts.")
@click.option("--probes", type=int, default=None)
@_seed_option
@click.pass_context
def compare_sampled_cmd(ctx, seed, **options):
    """H-matrices built from sampled entries."""
    from fastgnh.analysis import run_sampled_compression

    with _exit_on_error():
        cfg = ctx.obj.experiment_config(seed=seed, **options)
    _run_experiment(run_sampled_compression, cfg)


@cli.command("memory")
@click.option("--network", "networks", multiple=True, help="Canned network name (repeatable).")
@click.option("--n", "n_values", type=int, multiple=True, help="Data size (repeatable).")
@click.option("--output", "-o", type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
@click.pass_context
def memory_cmd(ctx, networks, n_values, output, report):
    """Single-precision memory of the precomputation vs the dense GNH."""
    from fastgnh.analysis import run_memory_report

    with _exit_on_error():
        cfg = ctx.obj.experiment_config(output=output, report=report)
    _run_experiment(run_memory_report, cfg, list(networks) or None, list(n_values) or None)


@cli.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--network", help="Canned network to preselect.")
@click.option("--force", "-f", is_flag=True, help="Overwrite an existing file.")
def init_config_cmd(path, network, force):
    """Write a commented default configuration file."""
    with _exit_on_error():
        commands.init_config(path, network, force)
    click.echo(f"Configuration written to {path}")

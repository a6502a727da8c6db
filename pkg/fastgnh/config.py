"""
Experiment configuration.

A configuration is a flat ``key=value`` file (``#`` starts a comment). The
CLI resolves settings as: command-line flag, then the file named by
``--config`` or the ``FASTGNH_CONFIG`` environment variable, then the
defaults below. Every report embeds `ExperimentConfig.to_dict()`, and a
report file is itself accepted by `from_file`, so any experiment can be
re-run from its output.
"""
import json
import os

from dataclasses import asdict, dataclass, fields, replace

from .exceptions import ConfigError
from .hmatrix.compress import resolve_preset
from .hmatrix.oracle import DEFAULT_LAMBDA
from .sampledata.networks import NetworkSpec, load_network_spec
from .sampling import EstimatorConfig
from .util import DEFAULT_MEMORY_BUDGET, parse_number_list


CONFIG_ENV = "FASTGNH_CONFIG"


@dataclass(frozen=True)
class ExperimentConfig(object):
    # network: a canned name, or explicit layers
    network: str = "desk-classifier"
    layers: str = ""
    activation: str = "relu,identity"
    loss: str = "cross-entropy"
    bias_mode: str = "augmented"
    kind: str = "classifier"
    # data
    dataset: str = "synthetic"
    images: str = ""
    labels: str = ""
    n: int = 500
    # warm-up
    warmup_steps: int = 0
    lr: float = 0.1
    batch_size: int = 32
    # sampler
    c: int = 100
    delta: float = 0.1
    seed: int = 0
    c_grid: str = "100,1000,10000"
    seeds: int = 20
    entries: int = 200
    # H-matrix
    presets: str = "low,high"
    leaf_size: int = 0
    max_rank: int = 0
    tol: float = -1.0
    lam: float = DEFAULT_LAMBDA
    metric: str = "angle"
    probes: int = 128
    # resources
    threads: int = 1
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    # outputs
    output: str = ""
    report: str = ""

    @classmethod
    def from_file(cls, path):
        """
        Loads a key=value file, or the `config` object of a JSON report.

        Raises
        ------
        ConfigError
            On unknown keys, malformed lines or values of the wrong type
        """
        path = os.path.expanduser(path)
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"Cannot read configuration {path}: {e.strerror}")
        if text.lstrip().startswith("{"):
            try:
                values = json.loads(text)
            except ValueError:
                raise ConfigError(f"{path} is not valid JSON")
            return cls.from_dict(values.get("config", values))
        values = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")
            values[key.strip()] = value.strip()
        return cls.from_dict(values)

    @classmethod
    def from_dict(cls, values):
        return cls().updated(**values)

    @classmethod
    def load(cls, path=None, **overrides):
        """
        Resolves `path`, then $FASTGNH_CONFIG, then the defaults, and applies
        every override that is not None.
        """
        path = path or os.environ.get(CONFIG_ENV)
        base = cls.from_file(path) if path else cls()
        return base.updated(**{k: v for k, v in overrides.items() if v is not None})

    def updated(self, **values):
        types = {f.name: f.type for f in fields(self)}
        converted = {}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"Unknown configuration key '{key}'")
            cast = {"int": int, "float": float, "str": str}.get(
                getattr(types[key], "__name__", types[key]), str
            )
            try:
                converted[key] = cast(float(value)) if cast is int else cast(value)
            except (TypeError, ValueError):
                raise ConfigError(f"Configuration key '{key}' expects {cast.__name__}, got '{value}'")
        return replace(self, **converted)

    def save(self, path):
        with open(os.path.expanduser(path), "w") as fh:
            for key, value in self.to_dict().items():
                fh.write(f"{key}={value}\n")

    def to_dict(self):
        return asdict(self)

    def network_spec(self) -> NetworkSpec:
        if self.layers:
            return NetworkSpec.create(
                parse_number_list(self.layers), self.activation, self.loss, self.bias_mode, self.kind
            )
        return load_network_spec(self.network)

    def estimator(self, c=None, seed=None) -> EstimatorConfig:
        return EstimatorConfig(
            int(self.c if c is None else c), self.delta, int(self.seed if seed is None else seed)
        )

    def c_values(self):
        return parse_number_list(self.c_grid)

    def preset_names(self):
        return [name.strip() for name in self.presets.split(",") if name.strip()]

    def preset(self, name, size):
        """A named preset with any explicitly configured controls applied"""
        return resolve_preset(
            name,
            size,
            self.leaf_size or None,
            self.max_rank or None,
            None if self.tol < 0 else self.tol,
        )

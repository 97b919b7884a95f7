"""
Experiment files: YAML documents validated against dataclass schemas.

Every key is checked; unknown keys and wrongly typed values raise
:class:`ConfigError` naming the dotted key path.
"""
import dataclasses
import itertools
import logging
import math
import typing
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import yaml

from rebmbo import benchmarks
from rebmbo.acquisition import AcquisitionConfig
from rebmbo.agent import PpoConfig
from rebmbo.ebm import EbmConfig
from rebmbo.errors import ConfigError, RebmboError
from rebmbo.kernels import KERNEL_KINDS


logger = logging.getLogger(__name__)

METHODS = ("rebmbo", "rebmbo-c", "rebmbo-s", "rebmbo-d", "gp-ucb", "random")
VARIANT_CODES = {"C": "exact", "S": "sparse", "D": "deep"}
METHOD_VARIANTS = {"rebmbo-c": "C", "rebmbo-s": "S", "rebmbo-d": "D"}
MAX_INITIAL_DESIGN = 20
SWEEP_SECTIONS = ("gp", "ebm", "acquisition", "agent", "metrics")
BASE_SETTING = "base"


def default_initial_design(dim: int) -> int:
    return min(max(5, 2 * dim), MAX_INITIAL_DESIGN)


@dataclass(frozen=True)
class GpConfig:
    """
    Surrogate settings. ``refit_until`` / ``refit_every`` control the
    hyperparameter cadence: every iteration while n <= refit_until, then every
    ``refit_every`` iterations.
    """

    kernel: str = "mixture"
    noise: float = 1e-6
    hyperparam_budget: int = 200
    hyperparam_starts: int = 4
    refit_until: int = 100
    refit_every: int = 5
    inducing: int = 32
    feature_dim: int = 8
    deep_hidden: int = 32
    deep_epochs: int = 100
    deep_learning_rate: float = 1e-3
    deep_beta: float = 100.0

    def __post_init__(self):
        if self.kernel not in KERNEL_KINDS:
            raise ConfigError(f"kernel must be one of {KERNEL_KINDS}, got {self.kernel!r}.", "gp.kernel")
        if not self.noise > 0:
            raise ConfigError(f"noise must be > 0, got {self.noise}.", "gp.noise")
        for name in ("hyperparam_budget", "hyperparam_starts", "refit_every", "inducing", "feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1.", f"gp.{name}")


@dataclass(frozen=True)
class MetricsConfig:
    alpha: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    """Everything one seeded run depends on."""

    method: str
    benchmark: str
    dim: int
    variant: str
    iterations: int
    initial_design: int
    seed: int
    record_wall_time: bool = False
    gp: GpConfig = field(default_factory=GpConfig)
    ebm: EbmConfig = field(default_factory=EbmConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    agent: PpoConfig = field(default_factory=PpoConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}.", "iterations")
        if self.initial_design < 1:
            raise ConfigError(f"initial_design must be >= 1, got {self.initial_design}.", "initial_design")
        if self.variant not in VARIANT_CODES:
            raise ConfigError(f"variant must be one of {sorted(VARIANT_CODES)}, got {self.variant!r}.", "variant")

    @property
    def warmup(self) -> int:
        return min(self.agent.warmup, self.iterations)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentFile:
    benchmark: str = "branin"
    dim: Optional[int] = None
    iterations: int = 30
    initial_design: Optional[int] = None
    variant: str = "C"
    methods: List[str] = field(default_factory=lambda: ["rebmbo-c", "gp-ucb", "random"])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "runs"
    checkpoints: List[int] = field(default_factory=lambda: [10, 20, 30])
    record_wall_time: bool = False
    gp: GpConfig = field(default_factory=GpConfig)
    ebm: EbmConfig = field(default_factory=EbmConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    agent: PpoConfig = field(default_factory=PpoConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sweep: Dict[str, list] = field(default_factory=dict)
    sweep_grid: bool = False

    def __post_init__(self):
        try:
            spec = benchmarks.lookup(self.benchmark, self.dim)
        except KeyError as e:
            raise ConfigError(str(e), "benchmark")
        except RebmboError as e:
            raise ConfigError(str(e), "dim")
        object.__setattr__(self, "dim", spec.dim)
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}.", "iterations")
        if self.initial_design is not None and self.initial_design < 1:
            raise ConfigError(f"initial_design must be >= 1, got {self.initial_design}.", "initial_design")
        if any(c < 1 for c in self.checkpoints):
            raise ConfigError("checkpoints must be >= 1.", "checkpoints")
        if self.initial_design is None:
            object.__setattr__(self, "initial_design", default_initial_design(spec.dim))
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"Unknown method {method!r}; expected one of {METHODS}.", "methods")
        if not self.methods:
            raise ConfigError("At least one method is required.", "methods")
        if not self.seeds:
            raise ConfigError("At least one seed is required.", "seeds")
        if self.variant not in VARIANT_CODES:
            raise ConfigError(f"variant must be one of {sorted(VARIANT_CODES)}, got {self.variant!r}.", "variant")
        if self.sweep:
            self.settings()

    def settings(self) -> List[Tuple[str, "ExperimentFile"]]:
        """
        Expands ``sweep`` into labelled experiments.

        ``sweep`` maps ``section.name`` key paths to lists of values. By default each
        value is tried on its own against the base settings, which come first under the
        label ``base``; with ``sweep_grid`` every combination is run instead.
        Labels read ``key=value`` joined by commas.

        :raises ConfigError: on an unknown key path, an empty value list or an invalid value
        """
        if not self.sweep:
            return [(BASE_SETTING, self)]
        for key, values in self.sweep.items():
            section, _, name = key.partition(".")
            if section not in SWEEP_SECTIONS or not name:
                message = f"Sweep keys must be <section>.<name> with a section in {SWEEP_SECTIONS}, got {key!r}."
                raise ConfigError(message, f"sweep.{key}")
            if not values:
                raise ConfigError(f"sweep.{key} needs at least one value.", f"sweep.{key}")
        keys = list(self.sweep)
        if self.sweep_grid:
            combos = [list(zip(keys, values)) for values in itertools.product(*(self.sweep[k] for k in keys))]
        else:
            combos = [[(key, value)] for key in keys for value in self.sweep[key]]
        settings = [] if self.sweep_grid else [(BASE_SETTING, dataclasses.replace(self, sweep={}))]
        for combo in combos:
            data = self.to_dict()
            del data["sweep"], data["sweep_grid"]
            for key, value in combo:
                section, _, name = key.partition(".")
                data[section][name] = value
            try:
                variant = experiment_from_dict(data)
            except ConfigError as e:
                raise ConfigError(f"sweep: {e}", f"sweep.{e.key_path}" if e.key_path else "sweep")
            settings.append((",".join(f"{key}={value}" for key, value in combo), variant))
        return settings

    def run_config(self, method: str, seed: int) -> RunConfig:
        if method not in METHODS:
            raise ConfigError(f"Unknown method {method!r}; expected one of {METHODS}.", "methods")
        return RunConfig(
            method=method,
            benchmark=self.benchmark,
            dim=self.dim,
            variant=METHOD_VARIANTS.get(method, self.variant),
            iterations=self.iterations,
            initial_design=self.initial_design,
            seed=int(seed),
            record_wall_time=self.record_wall_time,
            gp=self.gp,
            ebm=self.ebm,
            acquisition=self.acquisition,
            agent=self.agent,
            metrics=self.metrics,
        )

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)


def _type_name(annotation) -> str:
    return getattr(annotation, "__name__", str(annotation))


def _parse_float(text: str):
    try:
        value = float(text)
    except ValueError:
        return text
    return value if math.isfinite(value) else text


def _check_value(value, annotation, key_path: str):
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _check_value(value, inner, key_path)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{key_path} must be a list, got {type(value).__name__}.", key_path)
        return [_check_value(v, args[0], f"{key_path}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{key_path} must be a mapping, got {type(value).__name__}.", key_path)
        return {str(k): _check_value(v, args[1], f"{key_path}.{k}") for k, v in value.items()}
    if dataclasses.is_dataclass(annotation):
        return _build(annotation, value, key_path)
    if annotation is bool:
        ok = isinstance(value, bool)
    elif annotation is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif annotation is float:
        if isinstance(value, str):
            # YAML 1.1 resolves "1e-4" (no dot) to a string
            value = _parse_float(value)
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, annotation)
    if not ok:
        raise ConfigError(
            f"{key_path} must be of type {_type_name(annotation)}, got {type(value).__name__} ({value!r}).", key_path
        )
    return value


def _build(cls, data, prefix: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'The experiment file'} must be a mapping.", prefix or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        key_path = f"{prefix}.{key}" if prefix else str(key)
        if key not in names:
            raise ConfigError(f"Unknown key {key_path!r}.", key_path)
        kwargs[key] = _check_value(value, hints[key], key_path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (RebmboError, ValueError) as e:
        raise ConfigError(f"{prefix or 'config'}: {e}", prefix or None)


def experiment_from_dict(data: Optional[Dict]) -> ExperimentFile:
    return _build(ExperimentFile, data)


def parse_config(path: str) -> ExperimentFile:
    """
    Reads and validates an experiment file; an empty file resolves to all defaults.

    :raises FileNotFoundError: when ``path`` does not exist
    :raises ConfigError: on any schema violation
    """
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path} is not valid YAML: {e}")
    experiment = experiment_from_dict(data)
    logger.debug("Resolved experiment %s: %s", path, experiment)
    return experiment

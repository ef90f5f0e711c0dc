"""
Experiment Configuration

Experiments are described by one INI file with the sections [experiment],
[problem], [data], [optimizer] and [report]. The file is parsed with
configparser, coerced to typed dataclasses, and the resulting nested
dictionary is validated against the JSON schema in
shared/schemas/experiment_config.schema.json before anything runs.
"""

import configparser
import dataclasses
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union, get_type_hints

import jsonschema

from .errors import ConfigError
from .fedalgo import FastFedDAOptions, HyperParams

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parents[2] / "shared" / "schemas" / "experiment_config.schema.json"
DEFAULT_CONFIG_FILE = Path(__file__).resolve().parent / "fl_config.ini"
OUTPUT_ROOT_ENV = "FL_SIM_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"

# Defaults follow the full-gradient synthetic experiment
DEFAULT_SEED = 42
DEFAULT_ROUNDS = 500
DEFAULT_L1_STRENGTH = 0.003
DEFAULT_FSTAR_ITERATIONS = 20_000
DEFAULT_MU_GRID = [1e-3, 1e-2, 1e-1]

# Optional integers written as one of these words mean "not set"
_UNSET_WORDS = {"", "none", "full", "auto"}


@dataclass
class ProblemSpec:
    """Smooth loss, regularizer and starting point."""
    kind: str = "logistic"
    regularizer: str = "l1"
    strength: float = DEFAULT_L1_STRENGTH
    box_lo: float = -1.0
    box_hi: float = 1.0
    hidden: int = 16
    classes: int = 4
    smoothness: Optional[float] = None
    init: str = "zeros"
    init_scale: float = 0.1


@dataclass
class DataSpec:
    """Where the client shards come from and how they are partitioned."""
    source: str = "synthetic"
    alpha: float = 50.0
    beta: float = 50.0
    clients: int = 30
    dim: int = 20
    samples_per_client: int = 100
    noise_std: float = 0.1
    cov_decay: float = 1.2
    normalize: bool = True
    partition: str = "generated"
    uniform_fraction: float = 0.5
    images_path: str = ""
    labels_path: str = ""
    csv_path: str = ""
    label_column: int = -1
    limit: Optional[int] = None


@dataclass
class OptimizerSpec:
    eta: float = 4.0
    eta_g: float = 15.0
    tau: int = 10
    batch_size: Optional[int] = None
    fastfedda_gamma0: Optional[float] = None
    fastfedda_weighting: str = "linear"
    fastfedda_decay: str = "sqrt"


@dataclass
class ReportSpec:
    metric_every: int = 0
    fstar_iterations: int = DEFAULT_FSTAR_ITERATIONS
    fstar: Optional[float] = None
    variance_draws: int = 64
    variance_every: int = 10
    mu_grid: List[float] = field(default_factory=lambda: list(DEFAULT_MU_GRID))
    timing: bool = False


_SECTIONS = {"problem": ProblemSpec, "data": DataSpec, "optimizer": OptimizerSpec, "report": ReportSpec}
_EXPERIMENT_KEYS = ("name", "algorithm", "rounds", "seed", "threads", "snapshots", "output_dir")


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as handle:
        return json.load(handle)


def validate_config_dict(data: Dict[str, Any]) -> None:
    """Raise ConfigError for the first schema violation, if any."""
    validator = jsonschema.Draft7Validator(load_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is None:
        return
    path = ".".join(str(part) for part in error.absolute_path)
    if error.validator == "required":
        missing = error.message.split("'")[1] if "'" in error.message else error.message
        raise ConfigError(f"{path}.{missing}" if path else missing, "a value", None)
    if error.validator == "additionalProperties":
        raise ConfigError(path or "<root>", "a known key", error.message)
    expected = f"{error.validator} {error.validator_value}"
    raise ConfigError(path or "<root>", expected, error.instance)


def _coerce(section: str, key: str, raw: str, annotation: Any) -> Any:
    """Convert one INI string to the dataclass field type."""
    name = f"{section}.{key}"
    text = raw.strip()
    optional = getattr(annotation, "__origin__", None) is Union and type(None) in annotation.__args__
    if optional:
        if text.lower() in _UNSET_WORDS:
            return None
        annotation = next(arg for arg in annotation.__args__ if arg is not type(None))
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(text)
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if getattr(annotation, "__origin__", None) in (list, List):
            return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(name, getattr(annotation, "__name__", str(annotation)), raw) from None
    return text


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run."""
    name: str = "experiment"
    algorithm: str = "proposed"
    rounds: int = DEFAULT_ROUNDS
    seed: int = DEFAULT_SEED
    threads: int = 1
    snapshots: bool = False
    output_dir: str = ""
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    data: DataSpec = field(default_factory=DataSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    report: ReportSpec = field(default_factory=ReportSpec)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": {key: getattr(self, key) for key in _EXPERIMENT_KEYS},
            "problem": asdict(self.problem),
            "data": asdict(self.data),
            "optimizer": asdict(self.optimizer),
            "report": asdict(self.report),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        validate_config_dict(data)
        sections = {name: spec(**data.get(name, {})) for name, spec in _SECTIONS.items()}
        return cls(**data.get("experiment", {}), **sections)

    @classmethod
    def load_from_file(cls, config_path: Union[str, Path] = DEFAULT_CONFIG_FILE,
                       base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """
        Load an experiment from an INI file.

        Keys missing from the file keep the values of `base` (or the
        dataclass defaults); unknown sections or keys are rejected.
        """
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError("config", "an existing file", str(config_path))
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(config_path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError("config", "valid INI syntax", str(exc)) from None
        data = (base or cls()).to_dict()
        for section in parser.sections():
            if section not in data:
                raise ConfigError(section, "one of " + ", ".join(data), "unknown section")
            for key, raw in parser[section].items():
                data[section][key] = raw
        logger.debug("Loaded experiment config from %s", config_path)
        return cls.from_dict(cls._coerce_dict(data))

    @classmethod
    def _coerce_dict(cls, data: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
        hints = {"experiment": get_type_hints(cls)}
        hints.update({name: get_type_hints(spec) for name, spec in _SECTIONS.items()})
        coerced: Dict[str, Dict[str, Any]] = {}
        for section, values in data.items():
            coerced[section] = {}
            for key, value in values.items():
                if isinstance(value, str) and key in hints[section]:
                    value = _coerce(section, key, value, hints[section][key])
                coerced[section][key] = value
        return coerced

    def with_overrides(self, assignments: Iterable[str]) -> "ExperimentConfig":
        """Apply `section.key=value` assignments, as given to --set."""
        data = self.to_dict()
        for assignment in assignments:
            if "=" not in assignment or "." not in assignment.split("=", 1)[0]:
                raise ConfigError("--set", "section.key=value", assignment)
            target, raw = assignment.split("=", 1)
            section, key = target.strip().split(".", 1)
            if section not in data:
                raise ConfigError(target, "one of " + ", ".join(data), "unknown section")
            data[section][key] = raw
        return ExperimentConfig.from_dict(ExperimentConfig._coerce_dict(data))

    def replace(self, **changes: Any) -> "ExperimentConfig":
        updated = dataclasses.replace(self, **changes)
        validate_config_dict(updated.to_dict())
        return updated

    def write_config(self, path: Union[str, Path]) -> None:
        """Serialize the effective config; loading it back reproduces the run."""
        parser = configparser.ConfigParser(interpolation=None)
        for section, values in self.to_dict().items():
            parser[section] = {key: _format(value) for key, value in values.items()}
        with open(path, "w", encoding="utf-8") as handle:
            parser.write(handle)

    def hyper_params(self) -> HyperParams:
        return HyperParams(eta=self.optimizer.eta, eta_g=self.optimizer.eta_g, tau=self.optimizer.tau,
                           rounds=self.rounds, batch_size=self.optimizer.batch_size, seed=self.seed)

    def fastfedda_options(self) -> FastFedDAOptions:
        return FastFedDAOptions(gamma0=self.optimizer.fastfedda_gamma0,
                                weighting=self.optimizer.fastfedda_weighting,
                                decay=self.optimizer.fastfedda_decay)

    def resolve_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)) / f"{self.name}-{self.algorithm}"

"""
Run configuration.

Sources, lowest to highest precedence: defaults, a TOML file, environment
(CRASHLENS_THREADS, also read from .env), then `--set key=value` overrides
and dedicated CLI flags. Keys are flat and dotted, e.g. `gbm.n_trees`.
"""

import os
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.features.smote import SmoteConfig
from src.learners.boosting import GBMParams
from src.learners.forest import ForestParams
from src.learners.gaussian_process import LENGTHSCALE_FACTORS, NOISE_RATIOS
from src.learners.logistic import LogisticParams

logger = logging.getLogger(__name__)

THREADS_ENV = "CRASHLENS_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; `problems` holds one line per issue."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PathsSection(_Section):
    accidents: Optional[str] = None
    tracts: Optional[str] = None
    nodes: Optional[str] = None
    edges: Optional[str] = None
    out: str = "out"
    tract_id_property: str = "tract_id"


class IngestSection(_Section):
    strict: bool = False


class MoranSection(_Section):
    n_perm: int = Field(default=999, ge=99)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    # "paper" is accepted as another name for "weighted"
    variant: Literal["weighted", "paper", "conventional"] = "weighted"
    snap_tol_m: float = Field(default=0.5, ge=0.0)
    target: Literal["severe", "all"] = "severe"


class NetworkSection(_Section):
    directed_degree: bool = False
    length_weighted: bool = False


class SmoteSection(_Section):
    enabled: bool = True
    k_neighbors: int = Field(default=5, ge=1)
    target_ratio: float = Field(default=1.0, gt=0.0, le=1.0)
    per_feature: bool = False
    # oversample before splitting (optimistic protocol, for comparison only)
    leaky: bool = False

    def params(self, seed: int) -> SmoteConfig:
        return SmoteConfig(
            k_neighbors=self.k_neighbors, target_ratio=self.target_ratio,
            per_feature=self.per_feature, seed=seed,
        )


class GBMSection(_Section):
    n_trees: int = Field(default=300, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    max_depth: int = Field(default=3, ge=1)
    min_samples_leaf: int = Field(default=20, ge=1)
    subsample: float = Field(default=1.0, gt=0.0, le=1.0)

    def params(self, loss: str, seed: int) -> GBMParams:
        return GBMParams(**self.model_dump(), loss=loss, seed=seed)


class ForestSection(_Section):
    n_trees: int = Field(default=200, ge=1)
    max_depth: int = Field(default=12, ge=1)
    features_per_split: Optional[int] = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    bootstrap: bool = True

    def params(self, seed: int) -> ForestParams:
        return ForestParams(**self.model_dump(), seed=seed)


class LogRegSection(_Section):
    l2: float = Field(default=1e-4, ge=0.0)
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)

    def params(self) -> LogisticParams:
        return LogisticParams(**self.model_dump())


class GPSection(_Section):
    enabled: bool = True
    lengthscale_factors: List[float] = Field(default_factory=lambda: list(LENGTHSCALE_FACTORS))
    noise_ratios: List[float] = Field(default_factory=lambda: list(NOISE_RATIOS))


class CVSection(_Section):
    aggregated_folds: int = Field(default=20, ge=2)
    point_folds: int = Field(default=10, ge=2)
    stratify_point: bool = True
    stratify_aggregated: bool = False


class RunConfig(_Section):
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)
    paths: PathsSection = Field(default_factory=PathsSection)
    ingest: IngestSection = Field(default_factory=IngestSection)
    moran: MoranSection = Field(default_factory=MoranSection)
    network: NetworkSection = Field(default_factory=NetworkSection)
    smote: SmoteSection = Field(default_factory=SmoteSection)
    gbm: GBMSection = Field(default_factory=GBMSection)
    rf: ForestSection = Field(default_factory=ForestSection)
    logreg: LogRegSection = Field(default_factory=LogRegSection)
    gp: GPSection = Field(default_factory=GPSection)
    cv: CVSection = Field(default_factory=CVSection)

    def flat(self) -> Dict[str, Any]:
        """Every setting as a flat dotted key, in declaration order."""
        return _flatten(self.model_dump())


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _parse_value(raw: str) -> Any:
    """TOML literal when it parses (numbers, booleans, lists), else a bare string."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError([f"{key}: {part} is not a section"])
        node = child
    node[parts[-1]] = value


def _format_errors(exc: ValidationError) -> List[str]:
    problems = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"])
        if err["type"] == "extra_forbidden":
            problems.append(f"unknown config key '{key}'")
        else:
            problems.append(f"{key}: {err['msg']}")
    return problems


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[List[str]] = None,
    flags: Optional[Dict[str, Any]] = None,
    env_file: Optional[Union[str, Path]] = ".env"
) -> RunConfig:
    """
    Resolve the run configuration.

    Args:
        path: Optional TOML file
        overrides: `key=value` strings from `--set`
        flags: Dotted keys set by dedicated CLI flags (None values ignored)
        env_file: .env file to load, if present

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: listing every unknown key or bad value
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as file:
                data = tomllib.load(file)
        except OSError as e:
            raise ConfigError([f"cannot read config file {path}: {e.strerror or e}"])
        except tomllib.TOMLDecodeError as e:
            raise ConfigError([f"invalid TOML in {path}: {e}"])
        logger.info(f"Loaded configuration from {path}")

    if env_file and Path(env_file).exists():
        load_dotenv(env_file, override=False)
    threads_env = os.getenv(THREADS_ENV)
    if threads_env:
        try:
            data["threads"] = int(threads_env)
        except ValueError:
            raise ConfigError([f"{THREADS_ENV}: expected an integer, got {threads_env!r}"])

    problems = []
    for item in overrides or []:
        if "=" not in item:
            problems.append(f"--set expects key=value, got {item!r}")
            continue
        key, raw = item.split("=", 1)
        _set_dotted(data, key.strip(), _parse_value(raw.strip()))
    for key, value in (flags or {}).items():
        if value is not None:
            _set_dotted(data, key, value)
    if problems:
        raise ConfigError(problems)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None


def config_help() -> str:
    """One line per config key with its default value."""
    lines = ["configuration keys (default):"]
    for key, value in RunConfig().flat().items():
        lines.append(f"  {key} = {value!r}")
    return "\n".join(lines)

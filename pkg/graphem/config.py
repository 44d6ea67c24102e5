# graphem/config.py
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .em import GraphemConfig
from .errors import ConfigError
from .model import PRESETS, DatasetSpec
from .prox import DrConfig

load_dotenv()


class Settings(BaseSettings):
    """Process-wide defaults, read from GRAPHEM_* environment variables or .env."""

    model_config = SettingsConfigDict(env_prefix="GRAPHEM_", env_file=".env", extra="ignore")

    output_dir: Path = Path("results")
    jobs: int = 1
    log_level: str = "WARNING"
    csv_float_format: str = "%.17g"


settings = Settings()


class EmSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(1e-3, gt=0.0)
    max_iters: int = Field(50, ge=1)
    init_alpha: float = 0.1
    adaptive_dr_tolerance: bool = True
    mstep_scaling: Literal["per_sample", "none"] = "per_sample"


class DatasetOverrides(BaseModel):
    """Field-wise tweaks applied on top of a preset."""

    model_config = ConfigDict(extra="forbid")

    preset: Optional[str] = None
    block_sizes: Optional[List[int]] = None
    sigma_q: Optional[float] = None
    sigma_r: Optional[float] = None
    sigma_p: Optional[float] = None
    seq_length: Optional[int] = None
    seed: Optional[int] = None
    spectral_bound: Optional[float] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetOverrides = DatasetOverrides(preset="A")
    datasets: List[str] = Field(default_factory=lambda: sorted(PRESETS))
    method: Literal["graphem", "mlem"] = "graphem"
    gamma: Optional[float] = Field(None, ge=0.0)
    gamma_grid: Optional[List[float]] = None
    realizations: int = Field(1, ge=1)
    seed: int = 0
    jobs: int = Field(default_factory=lambda: settings.jobs, ge=1)
    out: Path = Field(default_factory=lambda: settings.output_dir)
    threshold: float = Field(1e-10, ge=0.0)
    data_dir: Optional[Path] = None
    em: EmSettings = EmSettings()
    dr: DrConfig = DrConfig()

    @model_validator(mode="before")
    @classmethod
    def _preset_shorthand(cls, data):
        # `dataset: C` is accepted as shorthand for `dataset: {preset: C}`
        if isinstance(data, dict) and isinstance(data.get("dataset"), str):
            data = {**data, "dataset": {"preset": data["dataset"]}}
        return data

    @model_validator(mode="after")
    def _check_grid(self):
        if self.gamma_grid is not None and not self.gamma_grid:
            raise ValueError("gamma_grid must not be empty")
        if self.gamma_grid is not None and any(g < 0 for g in self.gamma_grid):
            raise ValueError("gamma_grid values must be nonnegative")
        return self

    def dataset_spec(self, realization: int = 0, preset: Optional[str] = None) -> DatasetSpec:
        """Spec for one realization; its seed is base seed + realization index."""
        fields = self.dataset.model_dump(exclude_none=True)
        configured = fields.pop("preset", None)
        name = preset or configured
        base_seed = fields.pop("seed", self.seed)
        fields["seed"] = base_seed + realization
        try:
            if name is not None:
                return DatasetSpec.preset(name, **fields)
            return DatasetSpec(**fields)
        except ValidationError as e:
            raise ConfigError(f"Invalid dataset configuration: {e}") from e

    def graphem_config(self, gamma: Optional[float] = None) -> GraphemConfig:
        if gamma is None:
            gamma = self.gamma or 0.0
        return GraphemConfig(
            gamma=gamma,
            em_tolerance=self.em.tolerance,
            em_max_iters=self.em.max_iters,
            dr_config=self.dr,
            init_alpha=self.em.init_alpha,
            adaptive_dr_tolerance=self.em.adaptive_dr_tolerance,
            mstep_scaling=self.em.mstep_scaling,
        )

    def to_manifest(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def parse_scalar(text: str) -> Any:
    """Values on the command line follow YAML scalar rules (1e-4, true, [3, 3])."""
    value = yaml.safe_load(text)
    # PyYAML reads 1e-4 (no dot) as a string
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def set_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.replace("-", "_").split(".")
    node = tree
    for key in keys[:-1]:
        child = node.get(key)
        if isinstance(child, str):
            child = {"preset": child}
        elif not isinstance(child, dict):
            child = {}
        node[key] = child
        node = child
    node[keys[-1]] = value


def parse_dotted_overrides(args: List[str]) -> Dict[str, Any]:
    """Turn ['--em.tolerance', '1e-4', '--dr.theta=1.5'] into {'em.tolerance': 1e-4, ...}."""
    overrides: Dict[str, Any] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"Unexpected argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"Missing value for {arg}")
            i += 1
            raw = args[i]
        overrides[key] = parse_scalar(raw)
        i += 1
    return overrides


def load_config(
    path: Optional[Union[str, Path]] = None,
    flags: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """Defaults <- YAML file <- explicit flags <- dotted overrides."""
    tree: Dict[str, Any] = {"dataset": {"preset": "A"}}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must contain a mapping")
        tree.update(loaded)
    for dotted, value in (flags or {}).items():
        if value is not None:
            set_dotted(tree, dotted, value)
    for dotted, value in (overrides or {}).items():
        set_dotted(tree, dotted, value)
    try:
        return ExperimentConfig(**tree)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def dump_manifest(data: Dict[str, Any], path: Union[str, Path]) -> None:
    os.makedirs(Path(path).parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=True)

"""Configuration management for misclass-qlearn."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from misclass_qlearn.core.errors import ConfigError
from misclass_qlearn.core.qlearn import QLearnSpec
from misclass_qlearn.core.simulation import ScenarioConfig, SweepConfig, expand_sweep
from misclass_qlearn.core.types import ColumnSpec, MisclassRates, StageModel
from misclass_qlearn.utils.file_ops import read_file_safe
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

OutputFormat = Literal["csv", "json"]


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="MQL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    threads: int = Field(default=1, ge=1, description="Worker threads for replications")
    log_level: str = Field(default="INFO", description="Log level without --verbose or --quiet")
    output_format: OutputFormat = Field(default="csv", description="Default report format")
    bootstrap_samples: int = Field(
        default=200, ge=0, description="Bootstrap samples when a config does not set them"
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def load_config_file(path: Path | str) -> dict[str, Any]:
    """
    Load a YAML run configuration.

    Raises:
        ConfigError: the file is missing, unreadable or not a YAML mapping
    """
    path = Path(path)
    text = read_file_safe(path)
    if text is None:
        raise ConfigError(f"Cannot read config file: {path}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping at the top level")
    return data


def merge_overrides(section: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Apply command-line overrides to a config section; None values are ignored."""
    merged = dict(section)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _format_validation_error(source: str, error: ValidationError) -> str:
    problems = "; ".join(
        f"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}"
        for item in error.errors()
    )
    return f"Invalid configuration in {source}: {problems}"


class OutputConfig(BaseModel):
    """Where and how reports are written."""

    path: Path | None = None
    format: OutputFormat = "csv"


class SimulationRun(BaseModel):
    """A simulation config file: scenario cells plus output settings."""

    scenarios: list[ScenarioConfig]
    output: OutputConfig


def load_scenario_config(
    path: Path | str | None = None,
    overrides: dict[str, Any] | None = None,
    output_overrides: dict[str, Any] | None = None,
) -> SimulationRun:
    """
    Build the simulation cells of a config file (or of the overrides alone).

    The ``simulation`` section holds one ScenarioConfig, ``sweep`` expands it
    into a grid and ``output`` sets the report path and format.

    Raises:
        ConfigError: invalid file or settings
    """
    data = load_config_file(path) if path is not None else {}
    source = str(path) if path is not None else "command-line options"
    unknown = set(data) - {"simulation", "sweep", "output"}
    if unknown:
        raise ConfigError(f"Unknown section(s) in {source}: {', '.join(sorted(unknown))}")
    section = merge_overrides(data.get("simulation") or {}, overrides or {})
    output = merge_overrides(
        {"format": get_settings().output_format, **(data.get("output") or {})},
        output_overrides or {},
    )
    try:
        base = ScenarioConfig.model_validate(section)
        sweep = SweepConfig.model_validate(data["sweep"]) if data.get("sweep") else None
        # Explicit command-line values pin a swept dimension.
        if sweep is not None and overrides:
            sweep = _pin_sweep(sweep, overrides)
        scenarios = expand_sweep(base, sweep)
        return SimulationRun(scenarios=scenarios, output=OutputConfig.model_validate(output))
    except ValidationError as e:
        raise ConfigError(_format_validation_error(source, e)) from e


def _pin_sweep(sweep: SweepConfig, overrides: dict[str, Any]) -> SweepConfig:
    pinned = sweep.model_dump()
    if overrides.get("n") is not None:
        pinned["n"] = None
    if overrides.get("rho") is not None:
        pinned["rho"] = None
    if overrides.get("gamma10") is not None or overrides.get("gamma01") is not None:
        pinned["rates"] = None
    return SweepConfig.model_validate(pinned)


class AnalysisConfig(BaseModel):
    """Real-data Q-learning with a sensitivity grid of assumed misclassification rates."""

    input_path: Path
    outcome_column: str
    treatment_columns: list[str] = Field(min_length=1, max_length=2)
    treatment_free_columns: list[list[str]]
    blip_columns: list[list[str]]
    covariate_columns: list[str] | None = None
    stage2_covariate_columns: list[str] = Field(default_factory=list)
    standardize_columns: list[str] = Field(default_factory=list)
    gamma_grid: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    bootstrap_samples: int = Field(default_factory=lambda: get_settings().bootstrap_samples, ge=0)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    validation_column: str | None = None
    true_outcome_column: str | None = None
    output_path: Path | None = None
    output_format: OutputFormat = "csv"

    @field_validator("gamma_grid")
    @classmethod
    def _monotone_grid(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for g10, g01 in value:
            MisclassRates(g10, g01)
        return value

    @field_validator("bootstrap_samples")
    @classmethod
    def _enough_bootstrap_samples(cls, value: int) -> int:
        if 0 < value < 50:
            raise ValueError("bootstrap_samples must be 0 (disabled) or at least 50")
        return value

    @model_validator(mode="after")
    def _consistent_stages(self) -> AnalysisConfig:
        stages = len(self.treatment_columns)
        if len(self.treatment_free_columns) != stages or len(self.blip_columns) != stages:
            raise ValueError(
                f"{stages} treatment column(s) need {stages} treatment-free and blip column lists"
            )
        if any(not blip for blip in self.blip_columns):
            raise ValueError("every stage needs at least one blip column (e.g. the intercept '1')")
        if stages == 1 and self.stage2_covariate_columns:
            raise ValueError("stage2_covariate_columns require two treatment columns")
        if (self.validation_column is None) != (self.true_outcome_column is None):
            raise ValueError("validation_column and true_outcome_column must be given together")
        for columns in (*self.treatment_free_columns, *self.blip_columns):
            for column in columns:
                ColumnSpec.parse(column)
        return self

    @property
    def n_stages(self) -> int:
        return len(self.treatment_columns)

    @property
    def rates_grid(self) -> list[MisclassRates]:
        return [MisclassRates(g10, g01) for g10, g01 in self.gamma_grid]

    @property
    def spec(self) -> QLearnSpec:
        stage1 = StageModel.from_names(self.treatment_free_columns[0], self.blip_columns[0])
        if self.n_stages == 1:
            return QLearnSpec(stage1)
        stage2 = StageModel.from_names(self.treatment_free_columns[1], self.blip_columns[1])
        return QLearnSpec(stage2, stage1)

    def stage1_covariates(self) -> list[str]:
        """Stage-1 CSV columns: configured, or every variable the models reference."""
        if self.covariate_columns is not None:
            return list(self.covariate_columns)
        derived = {"A1", *self.stage2_covariate_columns}
        names: list[str] = []
        for columns in (*self.treatment_free_columns, *self.blip_columns):
            for factor in (f for c in columns for f in ColumnSpec.parse(c).factors):
                if factor not in derived and factor not in names:
                    names.append(factor)
        return names


def load_analysis_config(
    path: Path | str,
    overrides: dict[str, Any] | None = None,
) -> AnalysisConfig:
    """
    Load the ``analysis`` and ``output`` sections of a config file.

    A relative ``input_path`` is resolved against the config file's directory.

    Raises:
        ConfigError: invalid file or settings
    """
    path = Path(path)
    data = load_config_file(path)
    if "analysis" not in data:
        raise ConfigError(f"Config file {path} has no 'analysis' section")
    section = dict(data["analysis"] or {})
    output = data.get("output") or {}
    section.setdefault("output_path", output.get("path"))
    section.setdefault("output_format", output.get("format", get_settings().output_format))
    section = merge_overrides(section, overrides or {})
    if section.get("input_path") is not None:
        input_path = Path(section["input_path"])
        if not input_path.is_absolute():
            section["input_path"] = path.parent / input_path
    try:
        return AnalysisConfig.model_validate(section)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(str(path), e)) from e


def config_kind(path: Path | str) -> str:
    """'simulation' or 'analysis', from the sections present in the file."""
    data = load_config_file(path)
    if "analysis" in data:
        return "analysis"
    if "simulation" in data:
        return "simulation"
    raise ConfigError(f"Config file {path} needs a 'simulation' or 'analysis' section")

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from peiv_estimation.core.errors import ConfigurationError, ModelError
from peiv_estimation.domain.models import EstimatorName, ParamAffineModel

# Row-major nested list, or a scalar meaning ``value * I``.
Matrix = list[list[float]] | float

DEFAULT_BATCH_SIZES = [10, 15, 20, 25, 30, 35, 40, 45, 50, 100, 150, 200]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSpec(_Strict):
    """Parameter-affine state-space model definition."""

    n: int = Field(ge=1)
    m: int = Field(ge=1)
    d: int = Field(ge=0)
    F_basis: list[Matrix]
    H_basis: list[Matrix]
    Q: Matrix
    R: Matrix

    @model_validator(mode="after")
    def check_model(self) -> "ModelSpec":
        try:
            ParamAffineModel(
                n=self.n,
                m=self.m,
                d=self.d,
                F_basis=tuple(self.F_basis),  # type: ignore[arg-type]
                H_basis=tuple(self.H_basis),  # type: ignore[arg-type]
                Q=self.Q,  # type: ignore[arg-type]
                R=self.R,  # type: ignore[arg-type]
            )
        except ModelError as exc:
            raise ValueError(str(exc)) from exc
        return self


class PriorSpec(_Strict):
    """Gaussian prior on the initial state x_0."""

    mean: list[float]
    cov: Matrix


class ThetaPriorSpec(_Strict):
    """Parameter prior θ̂¹ ~ N(θ°, Σ_θ). ``mean`` null means: use the estimator's theta_init."""

    mean: list[float] | None = None
    cov: Matrix = 0.04


class EstimatorConfig(_Strict):
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    theta_init: list[float] | None = None
    aseks_param_noise: float = Field(default=0.0, ge=0)


class SimulationConfig(_Strict):
    batch_size: int = Field(default=30, ge=1)
    seed: int = 0


class MonteCarloConfig(_Strict):
    """Monte Carlo benchmark settings."""

    batch_sizes: list[int] = Field(default_factory=lambda: list(DEFAULT_BATCH_SIZES))
    replications: int = Field(default=1000, ge=2)
    seed: int = 0
    methods: list[EstimatorName] = Field(default_factory=lambda: list(EstimatorName))
    ellipse_batch_size: int | None = 30
    confidence: float = Field(default=0.95, gt=0, lt=1)
    reuse_first_measurement: bool = True
    prior_scale: float = Field(default=2.0, gt=0)
    threads: int = Field(default=1, ge=1)

    @field_validator("batch_sizes")
    @classmethod
    def check_batch_sizes(cls, v: list[int]) -> list[int]:
        if not v or min(v) < 2:
            raise ValueError("batch_sizes must be non-empty and every entry >= 2")
        return v


LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class LoggingConfig(_Strict):
    """Logging configuration."""

    level: LogLevel = "INFO"
    format: str = "%(asctime)s | %(name)s | %(levelname)s | %(message)s"
    json_output: bool = False
    log_dir: Path | None = None
    rotate_max_bytes: int = 10 * 1024 * 1024  # 10 MB
    rotate_backup_count: int = 5

    @field_validator("log_dir", mode="before")
    @classmethod
    def expand_log_dir(cls, v: str | Path | None) -> Path | None:
        if v is None:
            return None
        return Path(v).expanduser()


class ExperimentConfig(_Strict):
    """Experiment configuration loaded from YAML."""

    model: ModelSpec
    theta_true: list[float] = Field(default_factory=list)
    prior: PriorSpec | None = None
    theta_prior: ThetaPriorSpec = Field(default_factory=ThetaPriorSpec)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    montecarlo: MonteCarloConfig = Field(default_factory=MonteCarloConfig)
    output_dir: Path = Path("results")
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("output_dir", mode="before")
    @classmethod
    def expand_output_dir(cls, v: str | Path) -> Path:
        return Path(v).expanduser()

    @model_validator(mode="after")
    def check_dimensions(self) -> "ExperimentConfig":
        d, n = self.model.d, self.model.n
        if len(self.theta_true) != d:
            raise ValueError(f"theta_true must have length d={d}, got {len(self.theta_true)}")
        if self.estimator.theta_init is not None and len(self.estimator.theta_init) != d:
            raise ValueError(f"estimator.theta_init must have length d={d}")
        if self.theta_prior.mean is not None and len(self.theta_prior.mean) != d:
            raise ValueError(f"theta_prior.mean must have length d={d}")
        if self.prior is not None and len(self.prior.mean) != n:
            raise ValueError(f"prior.mean must have length n={n}")
        return self


class Settings(BaseSettings):
    """Environment settings (``PEIV_*`` variables, optionally from a .env file)."""

    model_config = SettingsConfigDict(
        env_prefix="PEIV_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    config_path: Path | None = None
    threads: int | None = Field(default=None, ge=1)

    @field_validator("config_path", mode="before")
    @classmethod
    def expand_config_path(cls, v: str | Path | None) -> Path | None:
        if v is None or v == "":
            return None
        return Path(v).expanduser()


def load_config(path: Path | None = None) -> ExperimentConfig:
    """Load and validate an experiment config.

    Falls back to ``PEIV_CONFIG_PATH`` when no path is given.
    """
    if path is None:
        path = Settings().config_path
    if path is None:
        raise ConfigurationError("No config path given and PEIV_CONFIG_PATH is not set")
    path = Path(path).expanduser()
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    try:
        with path.open("r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {exc}") from exc

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid config {path}:\n{exc}") from exc

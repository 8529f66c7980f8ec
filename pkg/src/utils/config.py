"""
Configuration module for the reconstruction pipeline.

Configs are flat INI files (``[section]`` headers, ``key = value`` lines).
Each section is validated into a pydantic model; the environment (loaded
through python-dotenv) may override the run seed with ``SLATER_SEED``.
"""

import configparser
import hashlib
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.utils.errors import ConfigError

logger = logging.getLogger("config")

SEED_ENV_VAR = "SLATER_SEED"
BASE_RESOLUTION = 4
PARAMETER_GROUPS = ("latents", "noise", "weights")


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def default_channels(n_layers: int) -> List[int]:
    """Channel widths halving every second layer from 64, floored at 16."""
    return [max(16, 64 >> (i // 2)) for i in range(n_layers)]


class SectionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunConfig(SectionModel):
    name: str = "slater"
    seed: int = Field(default=0, ge=0)


class SynthesizerConfig(SectionModel):
    """Generator architecture. Widths must be divisible by 4 for the positional encoding bands."""

    n_layers: int = Field(default=5, ge=2)
    final_resolution: int = 64
    channels: List[int] = Field(default_factory=list)
    n_latents: int = Field(default=16, ge=1)
    latent_dim: int = Field(default=32, ge=1)
    kernel_size: int = 3

    @field_validator("channels", mode="before")
    @classmethod
    def _split_channels(cls, value: Any) -> Any:
        return _split_list(value)

    @model_validator(mode="after")
    def _check_schedule(self) -> "SynthesizerConfig":
        if not self.channels:
            self.channels = default_channels(self.n_layers)
        expected = BASE_RESOLUTION * 2 ** (self.n_layers - 1)
        if self.final_resolution != expected:
            raise ValueError(
                f"final_resolution must be {expected} for {self.n_layers} layers, got {self.final_resolution}"
            )
        if len(self.channels) != self.n_layers:
            raise ValueError(f"expected {self.n_layers} channel widths, got {len(self.channels)}")
        if any(u <= 0 or u % 4 for u in self.channels):
            raise ValueError(f"channel widths must be positive multiples of 4, got {self.channels}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        return self

    @property
    def base_resolution(self) -> int:
        return BASE_RESOLUTION


class MapperConfig(SectionModel):
    attention_blocks: int = Field(default=4, ge=4, le=4)
    global_layers: int = Field(default=9, ge=9, le=9)


class DiscriminatorConfig(SectionModel):
    resolution: int = 64
    base_channels: int = Field(default=16, ge=1)
    max_channels: int = Field(default=64, ge=1)
    head_width: int = Field(default=64, ge=1)

    @field_validator("resolution")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 4 or not _is_power_of_two(value):
            raise ValueError(f"resolution must be a power of two >= 4, got {value}")
        return value

    @property
    def n_layers(self) -> int:
        return self.resolution.bit_length() - 2


class TrainConfig(SectionModel):
    lr: float = Field(default=1e-3, ge=0.0)
    beta1: float = Field(default=0.0, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.99, ge=0.0, lt=1.0)
    penalty_weight: float = Field(default=10.0, ge=0.0)
    batch_size: int = Field(default=4, ge=1)
    epochs: int = Field(default=1, ge=1)
    max_steps: Optional[int] = Field(default=None, ge=0)
    checkpoint_every: int = Field(default=50, ge=1)
    log_every: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)


class DatasetConfig(SectionModel):
    n_images: int = Field(default=200, ge=0)
    n_validation: int = Field(default=4, ge=0)
    kind: Literal["brain", "digits", "mixed"] = "mixed"
    image_size: Optional[int] = None
    magnitude: bool = False
    noise_variance: float = Field(default=0.0, ge=0.0)


class AcquisitionConfig(SectionModel):
    size: int = 64
    acceleration: float = Field(default=4.0, ge=1.0)
    n_coils: int = Field(default=1, ge=1)
    phantom: Literal["digits", "brain"] = "digits"
    noise_variance: float = Field(default=0.0, ge=0.0)
    n_slices: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("size")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if not _is_power_of_two(value):
            raise ValueError(f"acquisition size must be a power of two, got {value}")
        return value


class InferenceConfig(SectionModel):
    """
    Zero-shot / DIP inference settings; RMSprop hyperparameters plus the loss weights.

    ``lr`` drives the latents, ``noise_lr`` the noise maps and ``weights_lr``
    the generator weights. When the loss jumps above ``divergence_factor``
    times the best value so far, the best state is restored and every rate
    is halved, at most ``max_backoffs`` times.
    """

    mode: Literal["zero-shot", "dip"] = "zero-shot"
    lr: float = Field(default=0.1, ge=0.0)
    noise_lr: float = Field(default=0.1, ge=0.0)
    weights_lr: float = Field(default=1e-3, ge=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    max_iterations: int = Field(default=1000, ge=0)
    lambda1: float = Field(default=1.0, ge=0.0)
    lambda2: float = Field(default=0.0, ge=0.0)
    optimize: List[Literal["latents", "noise", "weights"]] = Field(
        default_factory=lambda: list(PARAMETER_GROUPS)
    )
    strict_dc: bool = False
    squared_l2: bool = False
    rampup_fraction: float = Field(default=0.05, ge=0.0, le=1.0)
    rampdown_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    divergence_factor: float = Field(default=2.0, gt=1.0)
    max_backoffs: int = Field(default=8, ge=0)
    patience: Optional[int] = Field(default=None, ge=1)
    log_every: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator("optimize", mode="before")
    @classmethod
    def _split_optimize(cls, value: Any) -> Any:
        return _split_list(value)

    def group_lr(self, group: str) -> float:
        return {"latents": self.lr, "noise": self.noise_lr, "weights": self.weights_lr}[group]

    def problems(self) -> List[str]:
        """Invariant violations that only matter once inference actually runs."""
        errors = []
        if self.lambda1 == 0 and self.lambda2 == 0:
            errors.append("lambda1 and lambda2 cannot both be 0")
        if not self.optimize:
            errors.append("the optimized parameter set must not be empty")
        return errors


SECTIONS: Dict[str, Type[SectionModel]] = {
    "run": RunConfig,
    "synthesizer": SynthesizerConfig,
    "mapper": MapperConfig,
    "discriminator": DiscriminatorConfig,
    "training": TrainConfig,
    "dataset": DatasetConfig,
    "acquisition": AcquisitionConfig,
    "inference": InferenceConfig,
}


def _format_validation_error(section: str, error: ValidationError) -> List[str]:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "(section)"
        messages.append(f"[{section}] {location}: {item['msg']}")
    return messages


class Config:
    """Application configuration."""

    def __init__(self, raw: Optional[Dict[str, Dict[str, Any]]] = None):
        """Initialize configuration from raw ``{section: {key: value}}`` data."""
        # Load environment variables
        load_dotenv()

        self.raw: Dict[str, Dict[str, Any]] = {name: dict(values) for name, values in (raw or {}).items()}
        self.source: Optional[Path] = None
        self.seed_override: Optional[int] = None

        self.env_errors: List[str] = []
        env_seed = os.getenv(SEED_ENV_VAR)
        if env_seed is not None and env_seed.strip():
            try:
                self.seed_override = int(env_seed)
                logger.info(f"{SEED_ENV_VAR}={self.seed_override} overrides the configured seed")
            except ValueError:
                self.env_errors.append(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")

        self._sections: Dict[str, SectionModel] = {}

    @classmethod
    def from_file(cls, file_path: Union[str, Path]) -> "Config":
        """Load raw sections from an INI file."""
        path = Path(file_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
        config = cls({section: dict(parser.items(section)) for section in parser.sections()})
        config.source = path
        return config

    def set_seed(self, seed: int) -> None:
        self.seed_override = seed
        self._sections.clear()

    def _section_data(self, name: str) -> Dict[str, Any]:
        data = dict(self.raw.get(name, {}))
        if "seed" in SECTIONS[name].model_fields:
            if self.seed_override is not None:
                data["seed"] = self.seed_override
            elif name != "run" and "seed" not in data:
                data["seed"] = self.raw.get("run", {}).get("seed", 0)
        return data

    def validate(self) -> List[str]:
        """Validate the configuration and return a list of validation errors."""
        errors = list(self.env_errors)

        for name in self.raw:
            if name not in SECTIONS:
                errors.append(f"Unknown config section: [{name}]")

        self._sections.clear()
        for name, model in SECTIONS.items():
            try:
                self._sections[name] = model(**self._section_data(name))
            except ValidationError as e:
                errors.extend(_format_validation_error(name, e))

        synth = self._sections.get("synthesizer")
        disc = self._sections.get("discriminator")
        acq = self._sections.get("acquisition")
        if synth is not None and disc is not None and "resolution" not in self.raw.get("discriminator", {}):
            self._sections["discriminator"] = disc = disc.model_copy(update={"resolution": synth.final_resolution})
        if synth is not None and disc is not None and disc.resolution != synth.final_resolution:
            errors.append(
                f"discriminator resolution {disc.resolution} differs from synthesizer output {synth.final_resolution}"
            )
        if synth is not None and acq is not None and acq.size > synth.final_resolution:
            errors.append(f"acquisition size {acq.size} exceeds synthesizer output {synth.final_resolution}")

        return errors

    def section(self, name: str) -> SectionModel:
        if name not in self._sections or len(self._sections) < len(SECTIONS):
            errors = self.validate()
            if errors:
                raise ConfigError("; ".join(errors))
        return self._sections[name]

    @property
    def run(self) -> RunConfig:
        return self.section("run")

    @property
    def synthesizer(self) -> SynthesizerConfig:
        return self.section("synthesizer")

    @property
    def mapper(self) -> MapperConfig:
        return self.section("mapper")

    @property
    def discriminator(self) -> DiscriminatorConfig:
        return self.section("discriminator")

    @property
    def training(self) -> TrainConfig:
        return self.section("training")

    @property
    def dataset(self) -> DatasetConfig:
        return self.section("dataset")

    @property
    def acquisition(self) -> AcquisitionConfig:
        return self.section("acquisition")

    @property
    def inference(self) -> InferenceConfig:
        return self.section("inference")

    @property
    def seed(self) -> int:
        return self.run.seed

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to dictionary."""
        return {name: self.section(name).model_dump() for name in SECTIONS}

    def to_text(self) -> str:
        """Canonical INI rendering; identical configs render identically."""
        lines = []
        for name, values in self.to_dict().items():
            lines.append(f"[{name}]")
            for key in sorted(values):
                value = values[key]
                if isinstance(value, (list, tuple)):
                    value = ", ".join(str(v) for v in value)
                elif value is None:
                    continue
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
    seed: Optional[int] = None,
) -> Config:
    """
    Load and validate configuration. Without a path, every section takes its defaults.

    ``overrides`` (command-line flags) replace file values before validation;
    ``seed`` wins over both the file and ``SLATER_SEED``.
    """
    config = Config.from_file(config_path) if config_path is not None else Config()
    for section, values in (overrides or {}).items():
        config.raw.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    if seed is not None:
        config.set_seed(seed)

    errors = config.validate()
    if errors:
        for error in errors:
            logger.error(f"Configuration error: {error}")
        raise ConfigError(f"Invalid configuration: {'; '.join(errors)}")

    return config

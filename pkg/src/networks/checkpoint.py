"""
Checkpoint directories.

A checkpoint holds ``generator/`` (synthesizer and mapper parameters,
prefixed ``synthesizer.`` and ``mapper.``) and optionally
``discriminator/``. Each part is a directory of STF1 files, one per
parameter, plus ``manifest.ini`` listing names, shapes, the network
config, and the step/epoch it was taken at.
"""

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from src.networks.base_network import BaseNetwork
from src.networks.mapper import Mapper
from src.networks.synthesizer import Synthesizer
from src.tensor.serialization import load_tensor, save_tensor
from src.utils.config import MapperConfig, SynthesizerConfig
from src.utils.errors import ConfigError, ContractError

logger = logging.getLogger("checkpoint")

MANIFEST = "manifest.ini"
GENERATOR = "generator"
DISCRIMINATOR = "discriminator"


def _write_manifest(path: Path, state: Dict[str, np.ndarray], config: Dict[str, Dict[str, Any]], step: int, epoch: int) -> None:
    parser = configparser.ConfigParser()
    parser["checkpoint"] = {"step": str(step), "epoch": str(epoch), "n_parameters": str(len(state))}
    parser["parameters"] = {name: "x".join(str(d) for d in value.shape) or "scalar" for name, value in state.items()}
    for section, values in config.items():
        parser[f"config.{section}"] = {
            key: ", ".join(str(v) for v in value) if isinstance(value, (list, tuple)) else str(value)
            for key, value in values.items()
            if value is not None
        }
    with open(path / MANIFEST, "w", encoding="utf-8") as f:
        parser.write(f)


def save_state(directory: Union[str, Path], state: Dict[str, np.ndarray], config: Dict[str, Dict[str, Any]], step: int = 0, epoch: int = 0) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, value in state.items():
        save_tensor(directory / f"{name}.stf1", value)
    _write_manifest(directory, state, config, step, epoch)
    return directory


@dataclass
class StoredState:
    """Parameters and metadata read back from one checkpoint part."""

    state: Dict[str, np.ndarray]
    config: Dict[str, Dict[str, str]] = field(default_factory=dict)
    step: int = 0
    epoch: int = 0


def load_state(directory: Union[str, Path]) -> StoredState:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.is_file():
        raise ConfigError(f"no checkpoint manifest at {manifest}")
    parser = configparser.ConfigParser()
    parser.read(manifest, encoding="utf-8")
    state = {}
    for name, shape_text in parser.items("parameters"):
        # configparser lowercases keys; parameter names are lowercase by construction
        value = load_tensor(directory / f"{name}.stf1")
        expected = () if shape_text == "scalar" else tuple(int(d) for d in shape_text.split("x"))
        if value.shape != expected:
            raise ContractError(f"{name}: file holds {value.shape}, manifest says {expected}")
        state[name] = value
    config = {
        section[len("config."):]: dict(parser.items(section))
        for section in parser.sections()
        if section.startswith("config.")
    }
    meta = parser["checkpoint"]
    return StoredState(state, config, int(meta.get("step", 0)), int(meta.get("epoch", 0)))


def prefixed(prefix: str, network: BaseNetwork) -> Dict[str, np.ndarray]:
    return {f"{prefix}.{name}": value for name, value in network.state_dict().items()}


def unprefixed(prefix: str, state: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    head = f"{prefix}."
    return {name[len(head):]: value for name, value in state.items() if name.startswith(head)}


def save_checkpoint(
    directory: Union[str, Path],
    synthesizer: BaseNetwork,
    mapper: BaseNetwork,
    discriminator: Optional[BaseNetwork],
    config: Dict[str, Dict[str, Any]],
    step: int = 0,
    epoch: int = 0,
) -> Path:
    directory = Path(directory)
    generator_state = {**prefixed("synthesizer", synthesizer), **prefixed("mapper", mapper)}
    save_state(directory / GENERATOR, generator_state, config, step, epoch)
    if discriminator is not None:
        save_state(directory / DISCRIMINATOR, discriminator.state_dict(), config, step, epoch)
    logger.info(f"Saved checkpoint at step {step} to {directory}")
    return directory


def load_generator(directory: Union[str, Path], synthesizer: BaseNetwork, mapper: BaseNetwork) -> StoredState:
    """Load generator weights into existing networks. Shape mismatches raise ContractError."""
    stored = load_state(Path(directory) / GENERATOR)
    synthesizer.load_state_dict(unprefixed("synthesizer", stored.state))
    mapper.load_state_dict(unprefixed("mapper", stored.state))
    logger.info(f"Loaded checkpoint from {directory} (step {stored.step})")
    return stored


def load_discriminator(directory: Union[str, Path], discriminator: BaseNetwork) -> StoredState:
    stored = load_state(Path(directory) / DISCRIMINATOR)
    discriminator.load_state_dict(stored.state)
    return stored


def restore_generator(directory: Union[str, Path]) -> Tuple[Synthesizer, Mapper, StoredState]:
    """Rebuild the synthesizer and mapper recorded in a checkpoint and load their weights."""
    stored = load_state(Path(directory) / GENERATOR)
    try:
        synth_config = SynthesizerConfig(**stored.config.get("synthesizer", {}))
        mapper_config = MapperConfig(**stored.config.get("mapper", {}))
    except ValidationError as e:
        raise ConfigError(f"checkpoint {directory} carries an invalid network config: {e}") from e
    # initial values are overwritten by the stored ones
    rng = np.random.default_rng(0)
    synthesizer = Synthesizer(synth_config, rng)
    mapper = Mapper(synth_config, rng, mapper_config)
    synthesizer.load_state_dict(unprefixed("synthesizer", stored.state))
    mapper.load_state_dict(unprefixed("mapper", stored.state))
    logger.info(f"Restored generator from {directory} (step {stored.step})")
    return synthesizer, mapper, stored

"""
Shared fixtures: a three-layer 16x16 generator small enough for unit
tests, and a single-coil digit-phantom acquisition at the same size.
"""

from typing import Any, Dict

import numpy as np
import pytest

from src.imaging.coils import simulate_coils
from src.imaging.masks import generate_vdrs_mask
from src.imaging.operator import Acquisition, simulate_acquisition
from src.imaging.phantoms import make_digit_phantom
from src.recon.inference import Prior
from src.utils.config import Config, InferenceConfig, SynthesizerConfig
from src.utils.context import RunContext, set_context

TINY = 16


def tiny_raw_config() -> Dict[str, Dict[str, Any]]:
    return {
        "run": {"seed": 0},
        "synthesizer": {
            "n_layers": 3,
            "final_resolution": TINY,
            "channels": "8, 8, 8",
            "n_latents": 4,
            "latent_dim": 8,
        },
        "discriminator": {"base_channels": 4, "max_channels": 8, "head_width": 8},
        "training": {"batch_size": 2, "max_steps": 2, "checkpoint_every": 1, "log_every": 1},
        "dataset": {"n_images": 4, "n_validation": 1, "kind": "digits"},
        "acquisition": {"size": TINY, "acceleration": 2},
        "inference": {"max_iterations": 3, "log_every": 1},
    }


@pytest.fixture(autouse=True)
def fresh_context(monkeypatch):
    """Every test starts from an empty global context and no seed override."""
    monkeypatch.delenv("SLATER_SEED", raising=False)
    set_context(RunContext())
    yield
    set_context(RunContext())


@pytest.fixture
def raw_config() -> Dict[str, Dict[str, Any]]:
    return tiny_raw_config()


@pytest.fixture
def config(raw_config) -> Config:
    config = Config(raw_config)
    assert config.validate() == []
    return config


@pytest.fixture
def synth_config() -> SynthesizerConfig:
    return SynthesizerConfig(n_layers=3, final_resolution=TINY, channels=[8, 8, 8], n_latents=4, latent_dim=8)


@pytest.fixture
def phantom() -> np.ndarray:
    return make_digit_phantom(TINY)


@pytest.fixture
def acquisition(phantom) -> Acquisition:
    mask = generate_vdrs_mask(TINY, TINY, 2.0, seed=3)
    return simulate_acquisition(phantom, mask, simulate_coils(TINY, TINY, 1))


@pytest.fixture
def dip_prior(synth_config) -> Prior:
    return Prior.untrained(synth_config, seed=0)


@pytest.fixture
def dip_config() -> InferenceConfig:
    return InferenceConfig(mode="dip", max_iterations=3, log_every=1)

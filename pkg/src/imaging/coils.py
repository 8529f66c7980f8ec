"""
Simulated receive-coil sensitivities.

Each coil is a smooth Gaussian lobe centered just outside the field of view
at an equally spaced angle, with a phase ramp along the same direction. The
maps are then normalized so that the sum of squared magnitudes is 1 at every
pixel.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from src.tensor.serialization import load_tensor, save_tensor
from src.utils.errors import ConfigError, DimensionError

logger = logging.getLogger("coils")

LOBE_RADIUS = 1.2
LOBE_WIDTH = 0.8
PHASE_SLOPE = 0.5 * np.pi


@dataclass
class CoilSet:
    """Complex sensitivity maps of shape (n_coils, h1, h2)."""

    maps: np.ndarray

    def __post_init__(self):
        self.maps = np.asarray(self.maps)
        if self.maps.ndim == 2:
            self.maps = self.maps[None]
        if self.maps.ndim != 3:
            raise DimensionError(f"coil maps must be (n_coils, h1, h2), got {self.maps.shape}")
        self.maps = self.maps.astype(np.complex64)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]

    def sum_of_squares(self) -> np.ndarray:
        return (np.abs(self.maps) ** 2).sum(axis=0)

    def save(self, path: Union[str, Path]) -> Path:
        return save_tensor(path, self.maps)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CoilSet":
        return cls(load_tensor(path))

    @classmethod
    def single(cls, h1: int, h2: int) -> "CoilSet":
        return cls(np.ones((1, h1, h2), dtype=np.complex64))


def simulate_coils(h1: int, h2: int, n_coils: int) -> CoilSet:
    if n_coils < 1:
        raise ConfigError(f"n_coils must be >= 1, got {n_coils}")
    if n_coils == 1:
        return CoilSet.single(h1, h2)

    y, x = np.meshgrid(np.linspace(-1.0, 1.0, h1), np.linspace(-1.0, 1.0, h2), indexing="ij")
    maps = np.empty((n_coils, h1, h2), dtype=np.complex128)
    for c in range(n_coils):
        angle = 2.0 * np.pi * c / n_coils
        cx, cy = LOBE_RADIUS * np.cos(angle), LOBE_RADIUS * np.sin(angle)
        magnitude = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * LOBE_WIDTH ** 2))
        phase = PHASE_SLOPE * (x * np.cos(angle) + y * np.sin(angle))
        maps[c] = magnitude * np.exp(1j * phase)
    maps /= np.sqrt((np.abs(maps) ** 2).sum(axis=0, keepdims=True))
    logger.debug(f"Simulated {n_coils} coils on a {h1}x{h2} grid")
    return CoilSet(maps)

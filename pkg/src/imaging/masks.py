"""
Variable-density random undersampling masks for centered Cartesian k-space.

The sampling probability is an isotropic Gaussian bump around the k-space
center with peak 1. Its width is bisected until the expected number of
samples matches the target acceleration; a 4x4 block around DC is always
sampled.
"""

import configparser
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.tensor.serialization import load_tensor, save_tensor
from src.utils.errors import ConfigError

logger = logging.getLogger("masks")

DC_BLOCK = 4
TOLERANCE = 0.1
MAX_DRAWS = 200
BISECTION_STEPS = 100


@dataclass
class SamplingMask:
    """Binary (h1, h2) mask plus the acceleration it was drawn for."""

    mask: np.ndarray
    target_acceleration: float
    realized_acceleration: float
    seed: int
    sigma: float = float("inf")
    draws: int = 1

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def n_sampled(self) -> int:
        return int(self.mask.sum())

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        parser["mask"] = {
            "shape": f"{self.shape[0]}x{self.shape[1]}",
            "target_acceleration": repr(float(self.target_acceleration)),
            "realized_acceleration": repr(float(self.realized_acceleration)),
            "n_sampled": str(self.n_sampled),
            "seed": str(self.seed),
            "sigma": repr(float(self.sigma)),
            "draws": str(self.draws),
        }
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def save(self, directory: Union[str, Path], stem: str = "mask") -> Path:
        directory = Path(directory)
        path = save_tensor(directory / f"{stem}.stf1", self.mask.astype(np.float32))
        (directory / f"{stem}.ini").write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, directory: Union[str, Path], stem: str = "mask") -> "SamplingMask":
        directory = Path(directory)
        mask = load_tensor(directory / f"{stem}.stf1")
        parser = configparser.ConfigParser()
        parser.read(directory / f"{stem}.ini", encoding="utf-8")
        meta = parser["mask"] if parser.has_section("mask") else {}
        n = max(int(mask.sum()), 1)
        return cls(
            mask=mask,
            target_acceleration=float(meta.get("target_acceleration", mask.size / n)),
            realized_acceleration=float(meta.get("realized_acceleration", mask.size / n)),
            seed=int(meta.get("seed", 0)),
            sigma=float(meta.get("sigma", "inf")),
            draws=int(meta.get("draws", 1)),
        )


def dc_block(h1: int, h2: int) -> np.ndarray:
    """Boolean (h1, h2) map of the central DC block."""
    block = np.zeros((h1, h2), dtype=bool)
    b1, b2 = min(DC_BLOCK, h1), min(DC_BLOCK, h2)
    c1, c2 = h1 // 2 - b1 // 2, h2 // 2 - b2 // 2
    block[c1:c1 + b1, c2:c2 + b2] = True
    return block


def radius_map(h1: int, h2: int) -> np.ndarray:
    """Distance of every k-space sample from the centered DC location, in samples."""
    k1 = np.arange(h1) - h1 // 2
    k2 = np.arange(h2) - h2 // 2
    return np.sqrt(k1[:, None] ** 2 + k2[None, :] ** 2)


def sampling_probability(h1: int, h2: int, sigma: float) -> np.ndarray:
    p = np.exp(-radius_map(h1, h2) ** 2 / (2.0 * sigma ** 2))
    p[dc_block(h1, h2)] = 1.0
    return p


def fit_sigma(h1: int, h2: int, target_count: float) -> float:
    """Gaussian width whose expected sample count equals ``target_count``."""
    low, high = 1e-3, 10.0 * max(h1, h2)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (low + high)
        if sampling_probability(h1, h2, mid).sum() < target_count:
            low = mid
        else:
            high = mid
    return 0.5 * (low + high)


def generate_vdrs_mask(h1: int, h2: int, acceleration: float, seed: int) -> SamplingMask:
    """
    Draw a variable-density random mask hitting ``acceleration`` within 10%.

    Raises:
        ConfigError: If ``acceleration < 1`` or the forced DC block alone
            already exceeds the sample budget.
    """
    if acceleration < 1:
        raise ConfigError(f"acceleration must be >= 1, got {acceleration}")
    total = h1 * h2
    if acceleration == 1:
        return SamplingMask(np.ones((h1, h2), dtype=np.float32), 1.0, 1.0, seed)

    target = total / acceleration
    forced = int(dc_block(h1, h2).sum())
    if forced > target * (1.0 + TOLERANCE):
        raise ConfigError(
            f"R={acceleration} leaves {target:.1f} samples, fewer than the {forced} forced DC samples"
        )

    sigma = fit_sigma(h1, h2, target)
    probability = sampling_probability(h1, h2, sigma)
    for draw in range(MAX_DRAWS):
        rng = np.random.default_rng(seed if draw == 0 else [seed, draw])
        mask = rng.random((h1, h2)) < probability
        count = int(mask.sum())
        if abs(count - target) <= TOLERANCE * target:
            logger.debug(f"mask R={acceleration} seed={seed}: {count} samples after {draw + 1} draw(s)")
            return SamplingMask(mask.astype(np.float32), float(acceleration), total / count, seed, sigma, draw + 1)
    raise ConfigError(f"could not draw a mask within 10% of R={acceleration} in {MAX_DRAWS} attempts")


def radial_density(masks: np.ndarray, n_bins: int = 8) -> np.ndarray:
    """Mean sampling frequency per radial bin over a stack of masks."""
    h1, h2 = masks.shape[-2:]
    radius = radius_map(h1, h2)
    edges = np.linspace(0.0, radius.max() + 1e-9, n_bins + 1)
    frequency = masks.reshape(-1, h1, h2).mean(axis=0)
    density = np.zeros(n_bins)
    for b in range(n_bins):
        ring = (radius >= edges[b]) & (radius < edges[b + 1])
        density[b] = frequency[ring].mean() if ring.any() else np.nan
    return density

"""
PSNR and SSIM between a reconstruction and its reference.

Both images are reduced to magnitudes and divided by their own maxima
before comparison, so the peak value is 1.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import signal

from src.utils.errors import ConfigError, ContractError

logger = logging.getLogger("metrics")

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
DATA_RANGE = 1.0
NORMALIZATION = "magnitude/per-image-max"


def to_magnitude(image: np.ndarray, normalize: bool = True) -> np.ndarray:
    magnitude = np.abs(np.asarray(image)).astype(np.float64)
    if normalize:
        peak = magnitude.max() if magnitude.size else 0.0
        if peak > 0:
            magnitude = magnitude / peak
    return magnitude


def _pair(recon: np.ndarray, reference: np.ndarray, normalize: bool):
    recon, reference = np.asarray(recon), np.asarray(reference)
    if recon.shape != reference.shape:
        raise ContractError(f"cannot compare {recon.shape} with {reference.shape}")
    return to_magnitude(recon, normalize), to_magnitude(reference, normalize)


def mse(recon: np.ndarray, reference: np.ndarray, normalize: bool = True) -> float:
    a, b = _pair(recon, reference, normalize)
    return float(np.mean((a - b) ** 2))


def psnr(recon: np.ndarray, reference: np.ndarray, normalize: bool = True) -> float:
    """
    Peak signal-to-noise ratio in dB for unit peak.

    Returns ``math.inf`` when the images agree exactly. ``normalize=False``
    skips the per-image max normalization (for data already on a unit scale).
    """
    error = mse(recon, reference, normalize)
    if error == 0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE ** 2 / error)


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    axis = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-axis ** 2 / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Local SSIM at every position where the window fits entirely."""

    def filt(x):
        return signal.convolve2d(x, window, mode="valid")

    c1, c2 = (K1 * DATA_RANGE) ** 2, (K2 * DATA_RANGE) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return numerator / denominator


def ssim(recon: np.ndarray, reference: np.ndarray, normalize: bool = True) -> float:
    a, b = _pair(recon, reference, normalize)
    if a.ndim != 2:
        raise ContractError(f"ssim compares 2D images, got {a.shape}")
    if min(a.shape) < WINDOW_SIZE:
        raise ConfigError(f"image {a.shape} is smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} SSIM window")
    return float(np.mean(ssim_map(a, b, gaussian_window())))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    normalization: str = NORMALIZATION

    def to_text(self) -> str:
        lines = [
            f"psnr_db={self.psnr:.6f}" if math.isfinite(self.psnr) else "psnr_db=inf",
            f"ssim={self.ssim:.6f}",
            f"normalization={self.normalization}",
            f"ssim_window={WINDOW_SIZE}",
            f"ssim_sigma={WINDOW_SIGMA}",
            f"ssim_k1={K1}",
            f"ssim_k2={K2}",
        ]
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        return cls(float(values["psnr_db"]), float(values["ssim"]), values.get("normalization", NORMALIZATION))


def evaluate(recon: np.ndarray, reference: np.ndarray) -> MetricReport:
    report = MetricReport(psnr(recon, reference), ssim(recon, reference))
    logger.debug(f"psnr={report.psnr:.3f} dB ssim={report.ssim:.4f}")
    return report

"""
Procedural test objects: the four-digit phantom and ellipse-based
brain-like slices and volumes.

All generators return complex64 arrays with peak magnitude 1 before noise.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import ConfigError, ContractError

logger = logging.getLogger("phantoms")

NOISE_LADDER: Tuple[float, ...] = (0.0, 0.01, 0.1)
DEFAULT_DIGITS: Tuple[int, ...] = (1, 2, 3, 4)

_GLYPHS: Dict[int, Tuple[str, ...]] = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def glyph(digit: int, scale: int = 1) -> np.ndarray:
    """5x7 bitmap of ``digit`` enlarged by an integer factor."""
    if digit not in _GLYPHS:
        raise ConfigError(f"no glyph for {digit!r}; digits are 0-9")
    bitmap = np.array([[int(c) for c in row] for row in _GLYPHS[digit]], dtype=np.float32)
    return np.kron(bitmap, np.ones((scale, scale), dtype=np.float32))


def make_digit_phantom(
    h: int,
    noise_variance: float = 0.0,
    digits: Sequence[int] = DEFAULT_DIGITS,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Four unit-intensity digits at the corners of a zero background.

    Glyphs go top-left, top-right, bottom-left, bottom-right in the order
    given. Real white Gaussian noise of the requested variance is added.
    """
    if noise_variance < 0:
        raise ConfigError(f"noise variance must be >= 0, got {noise_variance}")
    if len(digits) != 4:
        raise ConfigError(f"the digit phantom takes four digits, got {len(digits)}")
    scale = max(1, h // 16)
    margin = max(1, h // 16)
    g_h, g_w = 7 * scale, 5 * scale
    if 2 * (g_h + margin) > h or 2 * (g_w + margin) > h:
        raise ConfigError(f"a {h}x{h} image cannot hold four {g_h}x{g_w} glyphs")

    image = np.zeros((h, h), dtype=np.float32)
    corners = [
        (margin, margin),
        (margin, h - margin - g_w),
        (h - margin - g_h, margin),
        (h - margin - g_h, h - margin - g_w),
    ]
    for digit, (top, left) in zip(digits, corners):
        image[top:top + g_h, left:left + g_w] = glyph(int(digit), scale)

    if noise_variance > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        image = image + rng.normal(0.0, np.sqrt(noise_variance), image.shape).astype(np.float32)
    return image.astype(np.complex64)


def noise_ladder(h: int, rng: np.random.Generator, digits: Sequence[int] = DEFAULT_DIGITS) -> Dict[float, np.ndarray]:
    """The digit phantom at each standard noise level."""
    return {variance: make_digit_phantom(h, variance, digits, rng) for variance in NOISE_LADDER}


# ------------------------------------------------------------ brain-like


@dataclass
class Ellipse:
    intensity: float
    axes: Tuple[float, float]
    center: Tuple[float, float]
    angle: float

    def inside(self, x: np.ndarray, y: np.ndarray, shrink: float = 1.0) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        dx, dy = x - self.center[0], y - self.center[1]
        u = (c * dx + s * dy) / (self.axes[0] * shrink)
        v = (-s * dx + c * dy) / (self.axes[1] * shrink)
        return u * u + v * v <= 1.0


@dataclass
class BrainGeometry:
    """
    Randomized anatomy of one subject.

    ``render`` evaluates a cross-section at a slice position ``z`` in
    [-1, 1]; nearby positions give similar slices.
    """

    skull: Ellipse
    brain: Ellipse
    structures: List[Ellipse] = field(default_factory=list)
    blobs: List[Tuple[float, float, float, float]] = field(default_factory=list)
    phase: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def random(cls, rng: np.random.Generator, n_structures: int = 4, n_blobs: int = 3) -> "BrainGeometry":
        a, b = rng.uniform(0.72, 0.85), rng.uniform(0.85, 0.95)
        tilt = rng.uniform(-0.15, 0.15)
        skull = Ellipse(1.0, (a, b), (0.0, 0.0), tilt)
        brain = Ellipse(rng.uniform(0.55, 0.75), (a - 0.06, b - 0.06), (0.0, 0.0), tilt)
        structures = []
        for _ in range(n_structures):
            radius = rng.uniform(0.05, 0.3)
            offset = rng.uniform(-0.35, 0.35, size=2)
            structures.append(Ellipse(
                rng.uniform(-0.4, 0.35),
                (radius, radius * rng.uniform(0.4, 1.0)),
                (float(offset[0]), float(offset[1])),
                rng.uniform(0.0, np.pi),
            ))
        blobs = [
            (float(rng.uniform(-0.4, 0.4)), float(rng.uniform(-0.4, 0.4)), float(rng.uniform(0.05, 0.2)), float(rng.uniform(-0.2, 0.2)))
            for _ in range(n_blobs)
        ]
        phase = tuple(float(p) for p in rng.uniform(-0.5, 0.5, size=3))
        return cls(skull, brain, structures, blobs, phase)

    def render(self, h: int, z: float = 0.0) -> np.ndarray:
        if not -1.0 <= z <= 1.0:
            raise ConfigError(f"slice position must lie in [-1, 1], got {z}")
        y, x = np.meshgrid(np.linspace(-1.0, 1.0, h), np.linspace(-1.0, 1.0, h), indexing="ij")
        shrink = np.sqrt(1.0 - 0.5 * z * z)
        image = np.zeros((h, h), dtype=np.float64)
        skull = self.skull.inside(x, y, shrink)
        brain = self.brain.inside(x, y, shrink)
        image[skull & ~brain] = self.skull.intensity
        image[brain] = self.brain.intensity
        for structure in self.structures:
            # structures drift slowly through the volume
            drifted = Ellipse(structure.intensity, structure.axes, (structure.center[0], structure.center[1] + 0.1 * z), structure.angle)
            image[drifted.inside(x, y, shrink) & brain] += structure.intensity
        for bx, by, width, gain in self.blobs:
            smooth = gain * np.exp(-((x - bx) ** 2 + (y - by - 0.1 * z) ** 2) / (2.0 * width ** 2))
            image += np.where(brain, smooth, 0.0)
        image = np.clip(image, 0.0, None)
        peak = image.max()
        if peak > 0:
            image /= peak
        p0, p1, p2 = self.phase
        return (image * np.exp(1j * (p0 + p1 * x + p2 * y))).astype(np.complex64)


def make_brain_phantom(h: int, rng: np.random.Generator, z: float = 0.0) -> np.ndarray:
    return BrainGeometry.random(rng).render(h, z)


def make_volume(h: int, n_slices: int, rng: np.random.Generator, extent: float = 0.3) -> np.ndarray:
    """(n_slices, h, h) consecutive cross-sections of one random subject."""
    if n_slices < 1:
        raise ConfigError(f"n_slices must be >= 1, got {n_slices}")
    geometry = BrainGeometry.random(rng)
    positions = np.linspace(-extent, extent, n_slices) if n_slices > 1 else np.zeros(1)
    return np.stack([geometry.render(h, float(z)) for z in positions])


def zero_pad(image: np.ndarray, size: int) -> np.ndarray:
    """Center ``image`` on a zero (size, size) canvas."""
    h1, h2 = image.shape[-2:]
    if h1 > size or h2 > size:
        raise ContractError(f"cannot zero-pad {h1}x{h2} to {size}x{size}")
    out = np.zeros(image.shape[:-2] + (size, size), dtype=image.dtype)
    o1, o2 = (size - h1) // 2, (size - h2) // 2
    out[..., o1:o1 + h1, o2:o2 + h2] = image
    return out

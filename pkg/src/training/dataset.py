"""
Toy training set of complex images at the generator's output resolution.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from src.imaging.phantoms import BrainGeometry, make_digit_phantom, zero_pad
from src.utils.config import DatasetConfig
from src.utils.errors import ConfigError

logger = logging.getLogger("dataset")


def _random_digits(rng: np.random.Generator) -> List[int]:
    return [int(d) for d in rng.choice(10, size=4, replace=False)]


def make_image(kind: str, size: int, rng: np.random.Generator, noise_variance: float = 0.0) -> np.ndarray:
    if kind == "mixed":
        kind = "brain" if rng.random() < 0.5 else "digits"
    if kind == "digits":
        return make_digit_phantom(size, noise_variance, _random_digits(rng), rng)
    image = BrainGeometry.random(rng).render(size, float(rng.uniform(-0.5, 0.5)))
    if noise_variance > 0:
        image = image + rng.normal(0.0, np.sqrt(noise_variance), image.shape).astype(np.float32)
    return image.astype(np.complex64)


@dataclass
class ImageDataset:
    """(n, h, h) complex images; ``validation`` is held out from training."""

    images: np.ndarray
    validation: np.ndarray

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[-1]

    @classmethod
    def build(cls, config: DatasetConfig, resolution: int, rng: np.random.Generator) -> "ImageDataset":
        """Procedural phantoms drawn at ``image_size`` and zero-padded to ``resolution``."""
        size = config.image_size or resolution
        if size > resolution:
            raise ConfigError(f"image_size {size} exceeds the generator resolution {resolution}")

        def draw(n: int) -> np.ndarray:
            if n == 0:
                return np.zeros((0, resolution, resolution), dtype=np.complex64)
            images = np.stack([make_image(config.kind, size, rng, config.noise_variance) for _ in range(n)])
            if config.magnitude:
                images = np.abs(images).astype(np.complex64)
            return zero_pad(images, resolution)

        dataset = cls(draw(config.n_images), draw(config.n_validation))
        logger.info(f"Built {len(dataset)} {config.kind} training images ({size} padded to {resolution})")
        return dataset

    @classmethod
    def from_images(cls, images: np.ndarray, validation: Optional[np.ndarray] = None) -> "ImageDataset":
        images = np.asarray(images, dtype=np.complex64)
        if validation is None:
            validation = np.zeros((0,) + images.shape[1:], dtype=np.complex64)
        return cls(images, np.asarray(validation, dtype=np.complex64))


class BatchQueue:
    """
    Deterministic batch order: one permutation per epoch drawn from a
    seeded generator. A trailing partial batch is dropped when the set is
    larger than one batch.
    """

    def __init__(self, n_items: int, batch_size: int, seed: int):
        if n_items == 0:
            raise ConfigError("cannot batch an empty dataset")
        self.n_items = n_items
        self.batch_size = min(batch_size, n_items)
        self.seed = seed

    def batches_per_epoch(self) -> int:
        return self.n_items // self.batch_size

    def epoch(self, index: int) -> Iterator[np.ndarray]:
        order = np.random.default_rng([self.seed, index]).permutation(self.n_items)
        for b in range(self.batches_per_epoch()):
            yield order[b * self.batch_size:(b + 1) * self.batch_size]

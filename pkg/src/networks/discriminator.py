"""
Convolutional critic scoring (batch, h, h, 2) images with one logit each.
"""

from typing import List

import numpy as np

from src.networks.base_network import BaseNetwork
from src.networks.layers import LEAKY_SLOPE, Conv2d, Linear
from src.tensor import functional as F
from src.tensor.tensor import Tensor, as_tensor, reshape, stack
from src.tensor.tensor import imag as imag_part
from src.tensor.tensor import real as real_part
from src.utils.config import DiscriminatorConfig
from src.utils.errors import DimensionError, NumericError


def as_channels(images: Tensor) -> Tensor:
    """Complex (..., h, h) images as real (..., h, h, 2) with real/imag channels."""
    images = as_tensor(images)
    if not images.is_complex:
        return stack([images, images * 0.0], axis=-1)
    return stack([real_part(images), imag_part(images)], axis=-1)


class DownBlock(BaseNetwork):
    """conv3x3 -> leaky -> stride-2 conv -> leaky, plus a stride-2 conv of the input."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__("down-block")
        self.conv = self.register_child("conv", Conv2d(in_channels, in_channels, rng))
        self.down = self.register_child("down", Conv2d(in_channels, out_channels, rng, stride=2))
        self.skip = self.register_child("skip", Conv2d(in_channels, out_channels, rng, stride=2))

    def forward(self, x: Tensor) -> Tensor:
        h = F.leaky_relu(self.conv(x), LEAKY_SLOPE)
        h = F.leaky_relu(self.down(h), LEAKY_SLOPE)
        return h + self.skip(x)


class Discriminator(BaseNetwork):

    def __init__(self, config: DiscriminatorConfig, rng: np.random.Generator):
        super().__init__(f"discriminator:{config.resolution}")
        self.config = config
        self.resolution = config.resolution
        widths: List[int] = [2] + [
            min(config.base_channels * 2 ** i, config.max_channels) for i in range(config.n_layers)
        ]
        self.blocks = [
            self.register_child(f"block{i + 1}", DownBlock(a, b, rng))
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]
        final = self.resolution >> config.n_layers
        self.flat_features = final * final * widths[-1]
        self.fc1 = self.register_child("fc1", Linear(self.flat_features, config.head_width, rng))
        self.fc2 = self.register_child("fc2", Linear(config.head_width, 1, rng))

    def forward(self, x: Tensor) -> Tensor:
        """Logits of shape (batch,) for input (batch, h, h, 2); a single image gives shape (1,)."""
        x = as_tensor(x)
        if x.ndim == 3:
            x = reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1:] != (self.resolution, self.resolution, 2):
            raise DimensionError(f"discriminator expects (batch, {self.resolution}, {self.resolution}, 2), got {x.shape}")
        if np.isnan(x.data).any():
            raise NumericError("discriminator input contains NaN")
        batch = x.shape[0]
        for block in self.blocks:
            x = block(x)
        h = reshape(x, (batch, self.flat_features))
        h = F.leaky_relu(self.fc1(h), LEAKY_SLOPE)
        return reshape(self.fc2(h), (batch,))

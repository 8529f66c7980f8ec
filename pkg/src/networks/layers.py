"""
Building blocks shared by the synthesizer, mapper and discriminator.

Weights are drawn from a standard normal and scaled by 1/sqrt(fan_in);
biases start at a constant (zero unless stated).
"""

from typing import List, Optional

import numpy as np

from src.networks.base_network import BaseNetwork
from src.tensor import functional as F
from src.tensor.tensor import Tensor, as_tensor, matmul, mul, reshape
from src.utils.errors import ConfigError, DimensionError

DEMOD_EPS = 1e-8
LEAKY_SLOPE = 0.2


def scaled_normal(rng: np.random.Generator, shape, fan_in: float) -> np.ndarray:
    return rng.standard_normal(shape) / np.sqrt(fan_in)


class Linear(BaseNetwork):
    """Affine map over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, bias_init: float = 0.0):
        super().__init__("linear")
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = self.register_parameter("weight", scaled_normal(rng, (in_dim, out_dim), in_dim))
        self.bias = self.register_parameter("bias", np.full((out_dim,), bias_init)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"linear expects last extent {self.in_dim}, got {x.shape}")
        flat = x if x.ndim >= 2 else reshape(x, (1, self.in_dim))
        out = matmul(flat, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out if x.ndim >= 2 else reshape(out, (self.out_dim,))


class Conv2d(BaseNetwork):
    """Bias-free 'same' convolution, optionally strided."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, kernel_size: int = 3, stride: int = 1):
        super().__init__("conv2d")
        self.stride = stride
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        self.kernel = self.register_parameter("kernel", scaled_normal(rng, shape, kernel_size * kernel_size * in_channels))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.kernel, self.stride)


class Upsample(BaseNetwork):
    """Learnable 2x upsampling (3x3 transpose convolution)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, kernel_size: int = 3):
        super().__init__("upsample")
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        # each output pixel gathers about r*r/4 taps per input channel
        fan_in = max(1.0, in_channels * kernel_size * kernel_size / 4.0)
        self.kernel = self.register_parameter("kernel", scaled_normal(rng, shape, fan_in))

    def forward(self, x: Tensor) -> Tensor:
        return F.upsample2x(x, self.kernel)


def sinusoidal_encoding(h1: int, h2: int, u: int) -> np.ndarray:
    """
    Fixed (h1, h2, u) sinusoidal position code.

    Channels split into four equal bands: sin and cos of the column
    coordinate, then sin and cos of the row coordinate. Coordinates span
    [-1, 1]; within a band the divisor grows as 10000^(4 * k / u).
    """
    if u % 4:
        raise ConfigError(f"positional encoding needs a channel count divisible by 4, got {u}")
    band = u // 4
    rows = np.linspace(-1.0, 1.0, h1)[:, None, None]
    cols = np.linspace(-1.0, 1.0, h2)[None, :, None]
    divisors = 10000.0 ** (4.0 * np.arange(band) / u)
    code = np.zeros((h1, h2, u))
    code[:, :, 0 * band:1 * band] = np.sin(cols / divisors)
    code[:, :, 1 * band:2 * band] = np.cos(cols / divisors)
    code[:, :, 2 * band:3 * band] = np.sin(rows / divisors)
    code[:, :, 3 * band:4 * band] = np.cos(rows / divisors)
    return code


class CrossAttention(BaseNetwork):
    """
    Single-head cross-attention from feature-map pixels (queries) to the
    local latents (keys and values), followed by an attention-driven
    scale and shift of the instance-normalized features.
    """

    def __init__(self, h1: int, h2: int, channels: int, latent_dim: int, n_latents: int, rng: np.random.Generator):
        super().__init__("cross-attention")
        if n_latents < 1:
            raise ConfigError(f"cross-attention needs at least one latent, got K={n_latents}")
        self.h1, self.h2, self.channels = h1, h2, channels
        self.n_latents = n_latents
        self.encoding = sinusoidal_encoding(h1, h2, channels).reshape(h1 * h2, channels)
        self.position = self.register_parameter("position", scaled_normal(rng, (channels, channels), channels))
        self.query = self.register_child("query", Linear(channels, channels, rng, bias=False))
        self.key = self.register_child("key", Linear(latent_dim, channels, rng, bias=False))
        self.value = self.register_child("value", Linear(latent_dim, channels, rng, bias=False))
        self.gamma = self.register_child("gamma", Linear(channels, channels, rng, bias_init=1.0))
        self.beta = self.register_child("beta", Linear(channels, channels, rng))
        self.record_attention = False
        self.last_attention: Optional[np.ndarray] = None

    def attention(self, x: Tensor, latents: Tensor) -> Tensor:
        """(h1*h2, K) attention map for features ``x`` and keyed latents ``latents``."""
        flat = reshape(x, (self.h1 * self.h2, self.channels))
        queries = self.query(flat + matmul(self.encoding, self.position))
        keys = self.key(latents)
        return F.softmax_rows(matmul(queries, keys.T) * (1.0 / np.sqrt(self.channels)))

    def forward(self, x: Tensor, latents: Tensor) -> Tensor:
        x, latents = as_tensor(x), as_tensor(latents)
        if latents.shape[0] != self.n_latents:
            raise DimensionError(f"expected {self.n_latents} latents, got {latents.shape}")
        maps = self.attention(x, latents)
        if self.record_attention:
            self.last_attention = maps.numpy()
        features = matmul(maps, self.value(latents))
        normalized = reshape(F.instance_norm(x), (self.h1 * self.h2, self.channels))
        out = mul(self.gamma(features), normalized) + self.beta(features)
        return reshape(out, (self.h1, self.h2, self.channels))


def normalize_noise(noise: Tensor) -> Tensor:
    """Standardize a noise map to zero mean and unit deviation over space."""
    return F.normalize(noise, axis=(-2, -1))


class NoiseInjection(BaseNetwork):
    """Adds ``alpha * normalized(n)`` to every channel."""

    def __init__(self, alpha: float = 0.1):
        super().__init__("noise-injection")
        self.alpha = self.register_parameter("alpha", np.array(alpha))

    def forward(self, x: Tensor, noise: Tensor) -> Tensor:
        return noise_inject(x, noise, self.alpha)


def noise_inject(x: Tensor, noise: Tensor, alpha) -> Tensor:
    x, noise = as_tensor(x), as_tensor(noise)
    if noise.shape != x.shape[-3:-1]:
        raise DimensionError(f"noise map {noise.shape} does not match feature extents {x.shape[-3:-1]}")
    shared = reshape(normalize_noise(noise), noise.shape + (1,))
    return x + mul(shared, alpha)


def modulate_demodulate(theta: Tensor, scales: Tensor, eps: float = DEMOD_EPS) -> Tensor:
    """
    Scale kernel ``theta`` (r, r, u_in, u_out) per input channel, then
    renormalize every output-channel slice to unit L2 norm.
    """
    theta, scales = as_tensor(theta), as_tensor(scales)
    if scales.shape != (theta.shape[2],):
        raise DimensionError(f"expected {theta.shape[2]} modulation scales, got {scales.shape}")
    modulated = mul(theta, reshape(scales, (1, 1, theta.shape[2], 1)))
    norms = ((modulated * modulated).sum(axis=(0, 1, 2), keepdims=True) + eps).sqrt()
    return modulated / norms


def style_mod_conv(x: Tensor, theta: Tensor, scales: Tensor) -> Tensor:
    return F.conv2d(x, modulate_demodulate(theta, scales))


class StyleModConv(BaseNetwork):
    """Convolution whose kernel is modulated by a projection of the global latent."""

    def __init__(self, in_channels: int, out_channels: int, latent_dim: int, rng: np.random.Generator, kernel_size: int = 3):
        super().__init__("style-mod-conv")
        shape = (kernel_size, kernel_size, in_channels, out_channels)
        self.kernel = self.register_parameter("kernel", rng.standard_normal(shape))
        self.affine = self.register_child("affine", Linear(latent_dim, in_channels, rng, bias_init=1.0))

    def scales(self, global_latent: Tensor) -> Tensor:
        return self.affine(global_latent)

    def forward(self, x: Tensor, global_latent: Tensor) -> Tensor:
        return style_mod_conv(x, self.kernel, self.scales(global_latent))


class Sequential(BaseNetwork):
    """Linear layers with leaky-ReLU between them (not after the last)."""

    def __init__(self, widths: List[int], rng: np.random.Generator):
        super().__init__("sequential")
        self.layers = [
            self.register_child(f"fc{i}", Linear(a, b, rng))
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.leaky_relu(x, LEAKY_SLOPE)
        return x

"""
Mapper: refines i.i.d. normal raw latents into the local latents W_l and
the global latent w_g consumed by the synthesizer.

The local stream runs self-attention blocks (SA -> FC1 -> FC2, plus the
block input) and one output FC layer. The global stream is a stack of FC
layers.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.networks.base_network import BaseNetwork
from src.networks.layers import LEAKY_SLOPE, Linear, Sequential
from src.networks.synthesizer import LatentSet
from src.tensor import functional as F
from src.tensor.tensor import Tensor, as_tensor, matmul, mul
from src.utils.config import MapperConfig, SynthesizerConfig
from src.utils.errors import DimensionError


@dataclass
class RawLatents:
    """z_1..z_K stacked as (K, L_s) plus z_g of length L_s."""

    local: Tensor
    global_: Tensor

    @classmethod
    def sample(cls, rng: np.random.Generator, n_latents: int, latent_dim: int) -> "RawLatents":
        return cls(
            local=Tensor(rng.standard_normal((n_latents, latent_dim))),
            global_=Tensor(rng.standard_normal(latent_dim)),
        )


class SelfAttention(BaseNetwork):
    """Self-attention over the K latents, with a scale/shift of the row-normalized input."""

    def __init__(self, latent_dim: int, rng: np.random.Generator):
        super().__init__("self-attention")
        self.latent_dim = latent_dim
        self.query = self.register_child("query", Linear(latent_dim, latent_dim, rng, bias=False))
        self.key = self.register_child("key", Linear(latent_dim, latent_dim, rng, bias=False))
        self.value = self.register_child("value", Linear(latent_dim, latent_dim, rng, bias=False))
        self.gamma = self.register_child("gamma", Linear(latent_dim, latent_dim, rng, bias_init=1.0))
        self.beta = self.register_child("beta", Linear(latent_dim, latent_dim, rng))
        self.last_attention: Optional[np.ndarray] = None

    def attention(self, z: Tensor, position: Tensor) -> Tensor:
        positioned = z + position
        scores = matmul(self.query(positioned), self.key(positioned).T) * (1.0 / np.sqrt(self.latent_dim))
        return F.softmax_rows(scores)

    def forward(self, z: Tensor, position: Tensor) -> Tensor:
        z = as_tensor(z)
        maps = self.attention(z, position)
        self.last_attention = maps.numpy()
        features = matmul(maps, self.value(z + position))
        # statistics per latent vector
        normalized = F.normalize(z, axis=-1)
        return mul(self.gamma(features), normalized) + self.beta(features)


class SelfAttentionBlock(BaseNetwork):
    """SA -> FC1 (leaky) -> FC2, plus the block input."""

    def __init__(self, latent_dim: int, rng: np.random.Generator):
        super().__init__("self-attention-block")
        self.attention = self.register_child("sa", SelfAttention(latent_dim, rng))
        self.fc1 = self.register_child("fc1", Linear(latent_dim, latent_dim, rng))
        self.fc2 = self.register_child("fc2", Linear(latent_dim, latent_dim, rng))

    def forward(self, z: Tensor, position: Tensor) -> Tensor:
        x = self.attention(z, position)
        x = F.leaky_relu(self.fc1(x), LEAKY_SLOPE)
        return self.fc2(x) + z


class Mapper(BaseNetwork):

    def __init__(self, synth_config: SynthesizerConfig, rng: np.random.Generator, config: MapperConfig = MapperConfig()):
        super().__init__("mapper")
        K, L = synth_config.n_latents, synth_config.latent_dim
        self.n_latents, self.latent_dim = K, L
        self.position = self.register_parameter("position", rng.standard_normal((K, L)))
        self.blocks = [
            self.register_child(f"block{i}", SelfAttentionBlock(L, rng))
            for i in range(1, config.attention_blocks + 1)
        ]
        self.local_out = self.register_child("local_out", Linear(L, L, rng))
        self.global_stream = self.register_child("global", Sequential([L] * (config.global_layers + 1), rng))

    def sample(self, rng: np.random.Generator) -> RawLatents:
        return RawLatents.sample(rng, self.n_latents, self.latent_dim)

    def forward(self, z: RawLatents) -> LatentSet:
        local = as_tensor(z.local)
        if local.shape != (self.n_latents, self.latent_dim):
            raise DimensionError(f"raw local latents must be ({self.n_latents}, {self.latent_dim}), got {local.shape}")
        for block in self.blocks:
            local = block(local, self.position)
        return LatentSet(local=self.local_out(local), global_=self.global_stream(as_tensor(z.global_)))

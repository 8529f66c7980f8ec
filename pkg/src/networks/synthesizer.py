"""
The generator: a constant 4x4 input grown through upsampling layers of
cross-attention transformer blocks into a two-channel (real, imaginary)
image.

Layer 1 runs NI1 -> SC -> CA2 -> NI2 on the constant input. Middle layers
run Upsample, then CA1 -> NI1 -> SC -> CA2 -> NI2 with the upsampled input
added back. The last layer is Upsample -> SC followed by a projection to
two channels.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.networks.base_network import BaseNetwork
from src.networks.layers import (
    LEAKY_SLOPE,
    CrossAttention,
    Linear,
    NoiseInjection,
    StyleModConv,
    Upsample,
)
from src.tensor import functional as F
from src.tensor.tensor import Parameter, Tensor, make_complex, no_grad
from src.utils.config import SynthesizerConfig
from src.utils.errors import ConfigError


def latent_slots(n_layers: int) -> List[str]:
    """Names of the sub-blocks that consume a latent, in forward order."""
    slots = []
    for i in range(1, n_layers + 1):
        if 1 < i < n_layers:
            slots.append(f"layer{i}.ca1")
        slots.append(f"layer{i}.sc")
        if i < n_layers:
            slots.append(f"layer{i}.ca2")
    return slots


def noise_slots(n_layers: int) -> List[str]:
    return [f"layer{i}.ni{j}" for i in range(1, n_layers) for j in (1, 2)]


def layer_resolution(layer_index: int) -> int:
    return 4 * 2 ** (layer_index - 1)


def _is_style_slot(slot: str) -> bool:
    return slot.endswith(".sc")


@dataclass
class LatentSet:
    """
    Local latents (K x L_s) and one global latent (L_s).

    In shared mode every CA sub-block reads ``local`` and every SC sub-block
    reads ``global_``. Once segregated, each slot owns an independent copy.
    """

    local: Tensor
    global_: Tensor
    per_slot: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def segregated(self) -> bool:
        return bool(self.per_slot)

    @classmethod
    def random(cls, rng: np.random.Generator, n_latents: int, latent_dim: int) -> "LatentSet":
        return cls(
            local=Tensor(rng.standard_normal((n_latents, latent_dim))),
            global_=Tensor(rng.standard_normal(latent_dim)),
        )

    def for_slot(self, slot: str) -> Tensor:
        if self.segregated:
            if slot not in self.per_slot:
                raise ConfigError(f"segregated latents have no slot {slot}")
            return self.per_slot[slot]
        return self.global_ if _is_style_slot(slot) else self.local

    def segregate(self, slots: Sequence[str]) -> "LatentSet":
        """Independent learnable copies of the latents, one per slot."""
        per_slot = {
            slot: Parameter(self.for_slot(slot).data, name=slot)
            for slot in slots
        }
        return LatentSet(local=self.local.detach(), global_=self.global_.detach(), per_slot=per_slot)

    def trainable(self) -> "LatentSet":
        """Shared-mode latents as learnable leaves."""
        if self.segregated:
            return self
        return LatentSet(local=Parameter(self.local.data, name="local"), global_=Parameter(self.global_.data, name="global"))

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        if self.segregated:
            return [(f"latent.{slot}", value) for slot, value in self.per_slot.items()]
        return [("latent.local", self.local), ("latent.global", self.global_)]

    def check_slots(self, slots: Sequence[str]) -> None:
        if self.segregated and set(self.per_slot) != set(slots):
            raise ConfigError(f"segregated latents hold {len(self.per_slot)} slots, synthesizer expects {len(slots)}")


@dataclass
class NoiseBank:
    """One spatial noise map per noise-injection sub-block."""

    maps: Dict[str, Tensor]

    @classmethod
    def sample(cls, rng: np.random.Generator, n_layers: int) -> "NoiseBank":
        return cls({
            slot: Tensor(rng.standard_normal((layer_resolution(int(slot[5:].split(".")[0])),) * 2))
            for slot in noise_slots(n_layers)
        })

    def trainable(self) -> "NoiseBank":
        return NoiseBank({slot: Parameter(value.data, name=slot) for slot, value in self.maps.items()})

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [(f"noise.{slot}", value) for slot, value in self.maps.items()]

    def __getitem__(self, slot: str) -> Tensor:
        if slot not in self.maps:
            raise ConfigError(f"noise bank has no map {slot}")
        return self.maps[slot]


class SynthesisLayer(BaseNetwork):
    """One resolution step of the generator."""

    def __init__(
        self,
        index: int,
        n_layers: int,
        in_channels: int,
        channels: int,
        config: SynthesizerConfig,
        rng: np.random.Generator,
    ):
        super().__init__(f"synthesis-layer{index}")
        self.index = index
        self.is_first = index == 1
        self.is_last = index == n_layers
        self.resolution = layer_resolution(index)
        r, K, L = config.kernel_size, config.n_latents, config.latent_dim
        h = self.resolution

        if self.is_first:
            self.constant = self.register_parameter("constant", rng.standard_normal((h, h, channels)))
        else:
            self.up = self.register_child("up", Upsample(in_channels, channels, rng, r))
        if not self.is_first and not self.is_last:
            self.ca1 = self.register_child("ca1", CrossAttention(h, h, channels, L, K, rng))
        if not self.is_last:
            self.ni1 = self.register_child("ni1", NoiseInjection())
        self.sc = self.register_child("sc", StyleModConv(channels, channels, L, rng, r))
        if not self.is_last:
            self.ca2 = self.register_child("ca2", CrossAttention(h, h, channels, L, K, rng))
            self.ni2 = self.register_child("ni2", NoiseInjection())
        else:
            self.to_complex = self.register_child("to_complex", Linear(channels, 2, rng))

    def slot(self, name: str) -> str:
        return f"layer{self.index}.{name}"

    def block_forward(self, x: Tensor, latents: LatentSet, noise: NoiseBank, keyed: Dict[str, Tensor]) -> Tensor:
        """The transformer block (without the skip path)."""
        if not self.is_first:
            x = self.ca1(x, keyed[self.slot("ca1")])
        x = self.ni1(x, noise[self.slot("ni1")])
        x = F.leaky_relu(self.sc(x, latents.for_slot(self.slot("sc"))), LEAKY_SLOPE)
        x = self.ca2(x, keyed[self.slot("ca2")])
        return self.ni2(x, noise[self.slot("ni2")])

    def forward(self, x: Optional[Tensor], latents: LatentSet, noise: NoiseBank, keyed: Dict[str, Tensor]) -> Tensor:
        if self.is_first:
            return self.block_forward(self.constant, latents, noise, keyed)
        upsampled = self.up(x)
        if self.is_last:
            x = F.leaky_relu(self.sc(upsampled, latents.for_slot(self.slot("sc"))), LEAKY_SLOPE)
            return self.to_complex(x)
        return self.block_forward(upsampled, latents, noise, keyed) + upsampled

    def attention_blocks(self) -> Dict[str, CrossAttention]:
        names = [n for n in ("ca1", "ca2") if n in self._children]
        return {self.slot(n): self._children[n] for n in names}


class Synthesizer(BaseNetwork):
    """
    Generator mapping (latents, noise) to a complex image.
    """

    def __init__(self, config: SynthesizerConfig, rng: np.random.Generator):
        super().__init__(f"synthesizer:{config.n_layers}L")
        self.config = config
        self.n_layers = config.n_layers
        self.latent_position = self.register_parameter(
            "latent_position", rng.standard_normal((config.n_latents, config.latent_dim))
        )
        self.layers: List[SynthesisLayer] = []
        previous = config.channels[0]
        for i, channels in enumerate(config.channels, start=1):
            layer = SynthesisLayer(i, self.n_layers, previous, channels, config, rng)
            self.layers.append(self.register_child(f"layer{i}", layer))
            previous = channels
        self.logger.debug(f"Built synthesizer with {self.n_parameters} parameters")

    @property
    def resolution(self) -> int:
        return self.config.final_resolution

    def latent_slots(self) -> List[str]:
        return latent_slots(self.n_layers)

    def noise_slots(self) -> List[str]:
        return noise_slots(self.n_layers)

    def sample_noise(self, rng: np.random.Generator) -> NoiseBank:
        return NoiseBank.sample(rng, self.n_layers)

    def sample_latents(self, rng: np.random.Generator) -> LatentSet:
        return LatentSet.random(rng, self.config.n_latents, self.config.latent_dim)

    def _keyed_latents(self, latents: LatentSet) -> Dict[str, Tensor]:
        return {
            slot: latents.for_slot(slot) + self.latent_position
            for slot in self.latent_slots()
            if not _is_style_slot(slot)
        }

    def synth_layer(self, x: Optional[Tensor], latents: LatentSet, noise: NoiseBank, layer_index: int) -> Tensor:
        """Run a single layer (1-based index)."""
        if not 1 <= layer_index <= self.n_layers:
            raise ConfigError(f"layer index must lie in [1, {self.n_layers}], got {layer_index}")
        return self.layers[layer_index - 1](x, latents, noise, self._keyed_latents(latents))

    def forward_channels(self, latents: LatentSet, noise: NoiseBank) -> Tensor:
        """Two real output channels, shape (h, h, 2)."""
        latents.check_slots(self.latent_slots())
        keyed = self._keyed_latents(latents)
        x = None
        for layer in self.layers:
            x = layer(x, latents, noise, keyed)
        return x

    def forward(self, latents: LatentSet, noise: NoiseBank, crop_to: Optional[Tuple[int, int]] = None) -> Tensor:
        channels = self.forward_channels(latents, noise)
        image = make_complex(channels[..., 0], channels[..., 1])
        if crop_to is not None:
            image = F.center_crop(image, crop_to)
        return image

    def attention_blocks(self) -> Dict[str, CrossAttention]:
        blocks: Dict[str, CrossAttention] = {}
        for layer in self.layers:
            blocks.update(layer.attention_blocks())
        return blocks

    def attention_maps(self, latents: LatentSet, noise: NoiseBank) -> Dict[str, np.ndarray]:
        """Per-slot attention maps reshaped to (h, h, K)."""
        blocks = self.attention_blocks()
        for block in blocks.values():
            block.record_attention = True
        try:
            with no_grad():
                self.forward_channels(latents, noise)
        finally:
            for block in blocks.values():
                block.record_attention = False
        return {
            slot: block.last_attention.reshape(block.h1, block.h2, block.n_latents)
            for slot, block in blocks.items()
        }

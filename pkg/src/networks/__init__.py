"""
Generator (synthesizer + mapper), discriminator and their checkpoints.
"""

from src.networks.base_network import BaseNetwork
from src.networks.discriminator import Discriminator, as_channels
from src.networks.mapper import Mapper, RawLatents
from src.networks.synthesizer import LatentSet, NoiseBank, Synthesizer

__all__ = [
    "BaseNetwork",
    "Discriminator",
    "LatentSet",
    "Mapper",
    "NoiseBank",
    "RawLatents",
    "Synthesizer",
    "as_channels",
]

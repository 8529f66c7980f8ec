"""
Ablation ladder over the optimized parameter set: nothing, latents,
latents + noise, latents + noise + weights.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from src.imaging.operator import Acquisition
from src.recon.inference import Prior, ReconResult, infer, unadapted
from src.utils.config import InferenceConfig
from src.utils.errors import ConfigError


@dataclass(frozen=True)
class AblationMode:
    name: str
    groups: Tuple[str, ...]
    description: str = ""


class AblationRegistry:
    """
    Registry of named optimized-parameter sets.
    """

    def __init__(self):
        self.modes: Dict[str, AblationMode] = {}
        self.logger = logging.getLogger("ablation-registry")

    def register_mode(self, mode: AblationMode) -> None:
        """Register a mode."""
        self.modes[mode.name] = mode
        self.logger.debug(f"Registered ablation mode: {mode.name} ({'+'.join(mode.groups) or 'nothing'})")

    def get_mode(self, name: str) -> Optional[AblationMode]:
        """Get a mode by name."""
        return self.modes.get(name)

    def list_modes(self) -> List[AblationMode]:
        """List all registered modes."""
        return list(self.modes.values())

    def clear(self) -> None:
        self.modes.clear()


def build_default_registry() -> AblationRegistry:
    registry = AblationRegistry()
    registry.register_mode(AblationMode("None", (), "unadapted prior output"))
    registry.register_mode(AblationMode("L", ("latents",), "latents only"))
    registry.register_mode(AblationMode("LN", ("latents", "noise"), "latents and noise"))
    registry.register_mode(AblationMode("LNW", ("latents", "noise", "weights"), "latents, noise and weights"))
    return registry


def ablation_run(
    prior: Prior,
    acquisition: Acquisition,
    config: InferenceConfig,
    modes: Optional[Sequence[str]] = None,
    registry: Optional[AblationRegistry] = None,
) -> Dict[str, ReconResult]:
    """
    One reconstruction per mode, all from the same seed, acquisition and
    iteration budget. A mode with an empty parameter set returns the
    unadapted prior output.
    """
    registry = registry or build_default_registry()
    names = list(modes) if modes is not None else [m.name for m in registry.list_modes()]
    results: Dict[str, ReconResult] = {}
    for name in names:
        mode = registry.get_mode(name)
        if mode is None:
            raise ConfigError(f"unknown ablation mode {name!r}; known: {[m.name for m in registry.list_modes()]}")
        if not mode.groups:
            results[name] = unadapted(prior, acquisition, config)
        else:
            results[name] = infer(prior, acquisition, config.model_copy(update={"optimize": list(mode.groups)}))
        registry.logger.info(f"Ablation {name}: psnr={results[name].psnr}")
    return results

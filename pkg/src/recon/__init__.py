"""
Reconstruction by adapting a generative prior to one acquisition.
"""

from src.recon.ablation import AblationMode, AblationRegistry, ablation_run, build_default_registry
from src.recon.inference import Prior, ReconResult, dc_loss, infer, unadapted
from src.recon.propagation import propagate_weights, reconstruct_volume

__all__ = [
    "AblationMode",
    "AblationRegistry",
    "Prior",
    "ReconResult",
    "ablation_run",
    "build_default_registry",
    "dc_loss",
    "infer",
    "propagate_weights",
    "reconstruct_volume",
    "unadapted",
]

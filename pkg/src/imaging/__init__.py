"""
Forward model of accelerated multi-coil acquisition and the phantoms it is
exercised on.
"""

from src.imaging.coils import CoilSet, simulate_coils
from src.imaging.masks import SamplingMask, generate_vdrs_mask
from src.imaging.operator import (
    Acquisition,
    ImagingOperator,
    apply_adjoint,
    apply_forward,
    coil_combine,
    enforce_data_consistency,
    simulate_acquisition,
    zero_filled,
)
from src.imaging.phantoms import make_brain_phantom, make_digit_phantom, make_volume, zero_pad

__all__ = [
    "Acquisition",
    "CoilSet",
    "ImagingOperator",
    "SamplingMask",
    "apply_adjoint",
    "apply_forward",
    "coil_combine",
    "enforce_data_consistency",
    "generate_vdrs_mask",
    "make_brain_phantom",
    "make_digit_phantom",
    "make_volume",
    "simulate_acquisition",
    "simulate_coils",
    "zero_filled",
    "zero_pad",
]

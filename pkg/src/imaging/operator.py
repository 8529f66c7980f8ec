"""
The accelerated imaging operator A = M o F o C and its adjoint.

Both directions are written with tensor operations so that the
data-consistency loss can be differentiated through them.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.imaging.coils import CoilSet
from src.imaging.masks import SamplingMask
from src.tensor import functional as F
from src.tensor.serialization import load_tensor, save_tensor
from src.tensor.tensor import ArrayLike, Tensor, absolute, as_tensor, mul, no_grad
from src.utils.errors import ContractError

logger = logging.getLogger("imaging-operator")

COMBINE_EPS = 1e-8


@dataclass
class ImagingOperator:
    """Sampling mask and coil maps over a shared (h1, h2) acquisition matrix."""

    mask: SamplingMask
    coils: CoilSet

    def __post_init__(self):
        if tuple(self.mask.shape) != tuple(self.coils.shape):
            raise ContractError(f"mask {self.mask.shape} and coils {self.coils.shape} disagree")

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.mask.shape)

    @property
    def n_coils(self) -> int:
        return self.coils.n_coils

    @property
    def kspace_shape(self) -> Tuple[int, int, int]:
        return (self.n_coils,) + self.shape

    def forward(self, image: ArrayLike) -> Tensor:
        return apply_forward(self, image)

    def adjoint(self, kspace: ArrayLike) -> Tensor:
        return apply_adjoint(self, kspace)


def _expect(x: Tensor, shape: Tuple[int, ...], what: str) -> None:
    if tuple(x.shape) != tuple(shape):
        raise ContractError(f"{what} must have shape {shape}, got {x.shape}")


def apply_forward(op: ImagingOperator, image: ArrayLike) -> Tensor:
    """Masked multi-coil k-space y_c = M * fft2(C_c * m)."""
    image = as_tensor(image)
    _expect(image, op.shape, "image")
    coil_images = mul(image, op.coils.maps)
    return mul(F.fft2(coil_images), op.mask.mask)


def apply_adjoint(op: ImagingOperator, kspace: ArrayLike) -> Tensor:
    """Zero-filled image sum_c conj(C_c) * ifft2(M * y_c)."""
    kspace = as_tensor(kspace)
    _expect(kspace, op.kspace_shape, "k-space")
    coil_images = F.ifft2(mul(kspace, op.mask.mask))
    return mul(coil_images, np.conj(op.coils.maps)).sum(axis=0)


def coil_combine(coil_images: ArrayLike, coils: CoilSet, eps: float = COMBINE_EPS) -> Tensor:
    """Pointwise least-squares combination sum_c conj(C_c) x_c / sum_c |C_c|^2."""
    coil_images = as_tensor(coil_images)
    _expect(coil_images, coils.maps.shape, "coil images")
    numerator = mul(coil_images, np.conj(coils.maps)).sum(axis=0)
    return numerator * (1.0 / (coils.sum_of_squares() + eps))


def zero_filled(op: ImagingOperator, kspace: ArrayLike) -> np.ndarray:
    with no_grad():
        return apply_adjoint(op, kspace).numpy()


def enforce_data_consistency(op: ImagingOperator, image: ArrayLike, kspace: ArrayLike) -> np.ndarray:
    """
    Replace the sampled k-space of every coil image with the acquired values,
    then coil-combine the inverse transforms.
    """
    with no_grad():
        image = as_tensor(image)
        _expect(image, op.shape, "image")
        kspace = as_tensor(kspace)
        _expect(kspace, op.kspace_shape, "k-space")
        estimate = F.fft2(mul(image, op.coils.maps)).numpy()
        sampled = op.mask.mask.astype(bool)
        merged = np.where(sampled, kspace.numpy(), estimate)
        return coil_combine(F.ifft2(merged), op.coils).numpy()


def residual_norm(op: ImagingOperator, image: ArrayLike, kspace: ArrayLike) -> float:
    with no_grad():
        residual = apply_forward(op, image) - as_tensor(kspace) * op.mask.mask
        return float(absolute(residual).numpy().sum())


@dataclass
class Acquisition:
    """Undersampled multi-coil k-space together with its operator and, for simulations, the reference image."""

    operator: ImagingOperator
    kspace: np.ndarray
    reference: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.operator.shape

    def zero_filled(self) -> np.ndarray:
        return zero_filled(self.operator, self.kspace)

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        save_tensor(directory / "kspace.stf1", self.kspace)
        self.operator.mask.save(directory)
        self.operator.coils.save(directory / "coils.stf1")
        if self.reference is not None:
            save_tensor(directory / "reference.stf1", self.reference)
        logger.info(f"Wrote acquisition to {directory}")
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "Acquisition":
        directory = Path(directory)
        if not (directory / "kspace.stf1").is_file():
            raise ContractError(f"{directory} holds no kspace.stf1")
        mask = SamplingMask.load(directory)
        coils = CoilSet.load(directory / "coils.stf1")
        reference_path = directory / "reference.stf1"
        reference = load_tensor(reference_path) if reference_path.is_file() else None
        operator = ImagingOperator(mask, coils)
        kspace = load_tensor(directory / "kspace.stf1")
        if kspace.shape != operator.kspace_shape:
            raise ContractError(f"k-space {kspace.shape} does not match operator {operator.kspace_shape}")
        return cls(operator, kspace, reference)


def simulate_acquisition(reference: np.ndarray, mask: SamplingMask, coils: CoilSet) -> Acquisition:
    """Project a reference image through the operator."""
    operator = ImagingOperator(mask, coils)
    with no_grad():
        kspace = apply_forward(operator, reference).numpy()
    return Acquisition(operator, kspace, np.asarray(reference, dtype=np.complex64))

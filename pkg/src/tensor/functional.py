"""
Differentiable array operations built on the tape in ``tensor.py``.

Feature maps are channels-last: ``(..., h1, h2, u)``. Images and k-space
are ``(..., h1, h2)`` with the transform acting on the last two axes.
"""

from typing import Tuple

import numpy as np

from src.tensor.tensor import (
    ArrayLike,
    Tensor,
    _record,
    as_tensor,
    matmul,
    mul,
    reshape,
    to_complex,
    transpose,
)
from src.utils.errors import ContractError, DimensionError, NumericError

NORM_EPS = 1e-8


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


# ------------------------------------------------------------------- fourier


def _centered(data: np.ndarray, inverse: bool) -> np.ndarray:
    axes = (-2, -1)
    shifted = np.fft.ifftshift(data, axes=axes)
    if inverse:
        spectrum = np.fft.ifft2(shifted, axes=axes, norm="ortho")
    else:
        spectrum = np.fft.fft2(shifted, axes=axes, norm="ortho")
    return np.fft.fftshift(spectrum, axes=axes)


def _check_fourier_extents(x: Tensor) -> None:
    if x.ndim not in (2, 3):
        raise DimensionError(f"fft2 expects (h1, h2) or (coils, h1, h2), got {x.shape}")
    h1, h2 = x.shape[-2:]
    if not (_is_power_of_two(h1) and _is_power_of_two(h2)):
        raise DimensionError(f"fft2 extents must be powers of two, got {h1}x{h2}")


def fft2(x: ArrayLike) -> Tensor:
    """Centered, orthonormal 2D DFT over the last two axes."""
    x = to_complex(as_tensor(x))
    _check_fourier_extents(x)
    return _record(_centered(x.data, inverse=False), (x,), lambda g: (ifft2(g),), "fft2")


def ifft2(x: ArrayLike) -> Tensor:
    """Inverse of :func:`fft2` (and its adjoint, the transform being unitary)."""
    x = to_complex(as_tensor(x))
    _check_fourier_extents(x)
    return _record(_centered(x.data, inverse=True), (x,), lambda g: (fft2(g),), "ifft2")


# --------------------------------------------------------------- convolution


def _output_extent(size: int, r: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - r) // stride + 1


def _im2col_data(x: np.ndarray, r: int, stride: int, pad: int) -> np.ndarray:
    h1, h2 = x.shape[-3], x.shape[-2]
    o1, o2 = _output_extent(h1, r, stride, pad), _output_extent(h2, r, stride, pad)
    widths = [(0, 0)] * (x.ndim - 3) + [(pad, pad), (pad, pad), (0, 0)]
    padded = np.pad(x, widths)
    patches = [
        padded[..., di:di + stride * (o1 - 1) + 1:stride, dj:dj + stride * (o2 - 1) + 1:stride, :]
        for di in range(r)
        for dj in range(r)
    ]
    return np.concatenate(patches, axis=-1)


def _col2im_data(cols: np.ndarray, out_hw: Tuple[int, int], channels: int, r: int, stride: int, pad: int) -> np.ndarray:
    o1, o2 = cols.shape[-3], cols.shape[-2]
    h1, h2 = out_hw
    out = np.zeros(cols.shape[:-3] + (h1 + 2 * pad, h2 + 2 * pad, channels), dtype=cols.dtype)
    k = 0
    for di in range(r):
        for dj in range(r):
            out[..., di:di + stride * (o1 - 1) + 1:stride, dj:dj + stride * (o2 - 1) + 1:stride, :] += (
                cols[..., k * channels:(k + 1) * channels]
            )
            k += 1
    return out[..., pad:pad + h1, pad:pad + h2, :]


def im2col(x: ArrayLike, r: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Gather r x r patches: ``(..., h1, h2, u) -> (..., o1, o2, r*r*u)``."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"im2col expects (..., h1, h2, u), got {x.shape}")
    in_hw = (x.shape[-3], x.shape[-2])
    channels = x.shape[-1]
    return _record(
        _im2col_data(x.data, r, stride, pad),
        (x,),
        lambda g: (col2im(g, in_hw, channels, r, stride, pad),),
        "im2col",
    )


def col2im(cols: ArrayLike, out_hw: Tuple[int, int], channels: int, r: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Scatter-add patches back onto a grid; the adjoint of :func:`im2col`."""
    cols = as_tensor(cols)
    if cols.shape[-1] != r * r * channels:
        raise DimensionError(f"col2im expects {r * r * channels} patch entries, got {cols.shape[-1]}")
    return _record(
        _col2im_data(cols.data, out_hw, channels, r, stride, pad),
        (cols,),
        lambda g: (im2col(g, r, stride, pad),),
        "col2im",
    )


def _check_kernel(x: Tensor, kernel: Tensor, in_axis: int) -> int:
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise DimensionError(f"kernel must be (r, r, u_in, u_out), got {kernel.shape}")
    r = kernel.shape[0]
    if r % 2 == 0:
        raise DimensionError(f"kernel size must be odd, got {r}")
    if x.shape[-1] != kernel.shape[in_axis]:
        raise DimensionError(f"channel mismatch: input has {x.shape[-1]}, kernel expects {kernel.shape[in_axis]}")
    return r


def conv2d(x: ArrayLike, kernel: ArrayLike, stride: int = 1) -> Tensor:
    """Zero-padded 'same' convolution (cross-correlation) of channels-last maps."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    r = _check_kernel(x, kernel, in_axis=2)
    u_in, u_out = kernel.shape[2], kernel.shape[3]
    cols = im2col(x, r, stride, r // 2)
    return matmul(cols, reshape(kernel, (r * r * u_in, u_out)))


def conv_transpose2d(x: ArrayLike, kernel: ArrayLike, stride: int = 2) -> Tensor:
    """Transpose convolution producing ``stride`` times the spatial extents."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    r = _check_kernel(x, kernel, in_axis=2)
    u_in, u_out = kernel.shape[2], kernel.shape[3]
    spread = reshape(transpose(kernel, (2, 0, 1, 3)), (u_in, r * r * u_out))
    cols = matmul(x, spread)
    out_hw = (stride * x.shape[-3], stride * x.shape[-2])
    return col2im(cols, out_hw, u_out, r, stride, r // 2)


def upsample2x(x: ArrayLike, kernel: ArrayLike) -> Tensor:
    """Learnable 2x upsampling by transpose convolution."""
    return conv_transpose2d(x, kernel, stride=2)


# ---------------------------------------------------------------- activations


def _sigmoid_data(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def vjp(g: Tensor):
        return (mul(g, mul(out, 1.0 - out)),)

    out = _record(_sigmoid_data(x.data), (x,), vjp, "sigmoid")
    return out


def softplus(x: ArrayLike) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    x = as_tensor(x)
    return _record(np.logaddexp(0.0, x.data), (x,), lambda g: (mul(g, sigmoid(x)),), "softplus")


def leaky_relu(x: ArrayLike, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    gain = np.where(x.data > 0, 1.0, slope).astype(x.data.dtype)
    return mul(x, gain)


def softmax_rows(x: ArrayLike) -> Tensor:
    """Softmax along the last axis, stabilized by subtracting the row maximum."""
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    shifted = x - x.data.max(axis=-1, keepdims=True)
    weights = shifted.exp()
    return weights / weights.sum(axis=-1, keepdims=True)


def normalize(x: ArrayLike, axis, eps: float = NORM_EPS) -> Tensor:
    """Zero-mean, unit-deviation standardization over ``axis``."""
    x = as_tensor(x)
    centered = x - x.mean(axis=axis, keepdims=True)
    deviation = ((centered * centered).mean(axis=axis, keepdims=True) + eps).sqrt()
    return centered / deviation


def instance_norm(x: ArrayLike, eps: float = NORM_EPS) -> Tensor:
    """Per-channel standardization over the two spatial axes of ``(h1, h2, u)``."""
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError(f"instance_norm expects (..., h1, h2, u), got {x.shape}")
    return normalize(x, axis=(-3, -2), eps=eps)


def center_crop(x: ArrayLike, extents: Tuple[int, int]) -> Tensor:
    """Crop the last two axes of ``x`` to ``extents`` around the center."""
    x = as_tensor(x)
    h1, h2 = x.shape[-2:]
    c1, c2 = extents
    if c1 > h1 or c2 > h2:
        raise ContractError(f"cannot crop {h1}x{h2} to {c1}x{c2}")
    if (c1, c2) == (h1, h2):
        return x
    o1, o2 = (h1 - c1) // 2, (h2 - c2) // 2
    return x[..., o1:o1 + c1, o2:o2 + c2]

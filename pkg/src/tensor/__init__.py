"""
Minimal differentiable tensor engine.
"""

from src.tensor.tensor import (
    Parameter,
    Tensor,
    absolute,
    as_tensor,
    complex_dtype,
    concatenate,
    double_precision,
    enable_grad,
    grad,
    is_grad_enabled,
    make_complex,
    no_grad,
    real_dtype,
    stack,
)
from src.tensor.functional import (
    center_crop,
    conv2d,
    fft2,
    ifft2,
    instance_norm,
    leaky_relu,
    sigmoid,
    softmax_rows,
    softplus,
    upsample2x,
)
from src.tensor.optim import Adam, AdamHyper, RMSprop, RMSpropHyper, adam_step, rmsprop_step
from src.tensor.serialization import load_tensor, save_tensor

__all__ = [
    "Parameter",
    "Tensor",
    "absolute",
    "as_tensor",
    "complex_dtype",
    "concatenate",
    "double_precision",
    "enable_grad",
    "grad",
    "is_grad_enabled",
    "make_complex",
    "no_grad",
    "real_dtype",
    "stack",
    "center_crop",
    "conv2d",
    "fft2",
    "ifft2",
    "instance_norm",
    "leaky_relu",
    "sigmoid",
    "softmax_rows",
    "softplus",
    "upsample2x",
    "Adam",
    "AdamHyper",
    "RMSprop",
    "RMSpropHyper",
    "adam_step",
    "rmsprop_step",
    "load_tensor",
    "save_tensor",
]

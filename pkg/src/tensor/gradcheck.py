"""
Central finite-difference checks for tape gradients.
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from src.tensor.tensor import Tensor, double_precision, grad, imag, no_grad, real

logger = logging.getLogger("gradcheck")

Fn = Callable[..., Tensor]


def _scalarize(out: Tensor, weights: np.ndarray) -> Tensor:
    """Reduce ``out`` to a real scalar through a fixed random weighting."""
    if out.is_complex:
        return (real(out) * weights.real).sum() + (imag(out) * weights.imag).sum()
    return (out * weights.real).sum()


def _draw_weights(out: Tensor, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)


def numeric_gradient(fn: Fn, arrays: Sequence[np.ndarray], index: int, weights: np.ndarray, step: float) -> np.ndarray:
    """Central differences of the scalarized ``fn`` with respect to ``arrays[index]``."""
    base = arrays[index]
    estimate = np.zeros(base.shape, dtype=np.complex128 if np.iscomplexobj(base) else np.float64)
    directions = (1.0, 1j) if np.iscomplexobj(base) else (1.0,)

    def evaluate(values: List[np.ndarray]) -> float:
        with no_grad():
            return float(_scalarize(fn(*[Tensor(v) for v in values]), weights).item())

    for position in np.ndindex(base.shape):
        for direction in directions:
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[index][position] += step * direction
            minus[index][position] -= step * direction
            slope = (evaluate(plus) - evaluate(minus)) / (2.0 * step)
            estimate[position] += slope * direction
    return estimate


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    difference = np.linalg.norm((analytic - numeric).ravel())
    scale = max(np.linalg.norm(analytic.ravel()), np.linalg.norm(numeric.ravel()), floor)
    return float(difference / scale)


def check_gradients(
    fn: Fn,
    arrays: Sequence[np.ndarray],
    step: float = 1e-3,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> List[float]:
    """
    Compare tape gradients of ``fn`` against central differences.

    Non-scalar outputs are reduced with fixed random weights first. Runs in
    double precision. Returns one relative error per input.
    """
    rng = rng or np.random.default_rng(seed)
    with double_precision():
        arrays = [
            np.asarray(a, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
            for a in arrays
        ]
        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        out = fn(*inputs)
        weights = _draw_weights(out, rng)
        analytic = grad(_scalarize(out, weights), inputs)
        errors = []
        for i, g in enumerate(analytic):
            numeric = numeric_gradient(fn, arrays, i, weights, step)
            errors.append(relative_error(g.data, numeric))
    logger.debug(f"gradient check errors: {errors}")
    return errors

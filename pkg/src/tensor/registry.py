"""
Registry of differentiable operations.

Each entry pairs an op with a factory for small random sample inputs, so
gradient checks and adjoint tests can sweep every op the engine offers.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from src.tensor import functional as F
from src.tensor import tensor as T

SampleFactory = Callable[[np.random.Generator], List[np.ndarray]]


@dataclass(frozen=True)
class DifferentiableOp:
    """An operation together with a sample-input factory."""

    name: str
    fn: Callable[..., T.Tensor]
    sample: SampleFactory
    description: str = ""
    linear: bool = False

    def sample_inputs(self, seed: int = 0) -> List[np.ndarray]:
        return self.sample(np.random.default_rng(seed))


class OpRegistry:
    """
    Registry for the differentiable operations of the tensor engine.
    """

    def __init__(self):
        self.ops: Dict[str, DifferentiableOp] = {}
        self.logger = logging.getLogger("op-registry")

    def register_op(self, op: DifferentiableOp) -> None:
        """Register an operation."""
        self.ops[op.name] = op
        self.logger.debug(f"Registered op: {op.name}")

    def get_op(self, name: str) -> Optional[DifferentiableOp]:
        """Get an operation by name."""
        return self.ops.get(name)

    def list_ops(self) -> List[DifferentiableOp]:
        """List all registered operations."""
        return list(self.ops.values())

    def clear(self) -> None:
        self.ops.clear()


def _real(*shape: int) -> SampleFactory:
    return lambda rng: [rng.standard_normal(shape)]


def _complex(*shape: int) -> SampleFactory:
    def factory(rng: np.random.Generator) -> List[np.ndarray]:
        return [rng.standard_normal(shape) + 1j * rng.standard_normal(shape)]
    return factory


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    magnitude = rng.uniform(0.5, 1.5, size=shape)
    return magnitude * rng.choice([-1.0, 1.0], size=shape)


def _pair(first: SampleFactory, second: SampleFactory) -> SampleFactory:
    return lambda rng: first(rng) + second(rng)


def build_default_registry() -> OpRegistry:
    """A registry holding every differentiable op used by the networks and losses."""
    registry = OpRegistry()
    entries = [
        DifferentiableOp("add", T.add, _pair(_real(4), _real(4)), "elementwise sum"),
        DifferentiableOp("add_broadcast", T.add, _pair(_real(2, 2), _real(1, 2)), "broadcast sum"),
        DifferentiableOp("sub", T.sub, _pair(_real(4), _real(4)), "elementwise difference"),
        DifferentiableOp("mul", T.mul, _pair(_real(4), _real(4)), "elementwise product"),
        DifferentiableOp("mul_complex", T.mul, _pair(_complex(4), _complex(4)), "complex product"),
        DifferentiableOp(
            "div", T.div,
            lambda rng: [rng.standard_normal(4), _away_from_zero(rng, 4)],
            "elementwise quotient",
        ),
        DifferentiableOp("neg", T.neg, _real(4), "negation", linear=True),
        DifferentiableOp(
            "power", lambda a: T.power(a, 3.0), lambda rng: [rng.uniform(0.5, 1.5, 4)], "real power",
        ),
        DifferentiableOp("exp", T.exp, _real(4), "exponential"),
        DifferentiableOp("log", T.log, lambda rng: [rng.uniform(0.5, 2.0, 4)], "natural logarithm"),
        DifferentiableOp("sqrt", T.sqrt, lambda rng: [rng.uniform(0.5, 2.0, 4)], "square root"),
        DifferentiableOp("abs", T.absolute, lambda rng: [_away_from_zero(rng, 4)], "real modulus"),
        DifferentiableOp("abs_complex", T.absolute, _complex(4), "complex modulus"),
        DifferentiableOp("conj", T.conj, _complex(4), "complex conjugate"),
        DifferentiableOp("real", T.real, _complex(4), "real part"),
        DifferentiableOp("imag", T.imag, _complex(4), "imaginary part"),
        DifferentiableOp("to_complex", T.to_complex, _real(4), "real to complex"),
        DifferentiableOp("make_complex", T.make_complex, _pair(_real(4), _real(4)), "(re, im) to complex"),
        DifferentiableOp("matmul", T.matmul, _pair(_real(2, 3), _real(3, 2)), "matrix product"),
        DifferentiableOp("matmul_complex", T.matmul, _pair(_complex(2, 2), _complex(2, 2)), "complex matrix product"),
        DifferentiableOp("sum", lambda a: T.tensor_sum(a, axis=0), _real(2, 2), "axis sum", linear=True),
        DifferentiableOp("mean", lambda a: T.tensor_mean(a, axis=1, keepdims=True), _real(2, 2), "axis mean"),
        DifferentiableOp("reshape", lambda a: T.reshape(a, (4,)), _real(2, 2), "reshape", linear=True),
        DifferentiableOp("transpose", lambda a: T.transpose(a, (1, 0)), _real(2, 2), "transpose", linear=True),
        DifferentiableOp("broadcast_to", lambda a: T.broadcast_to(a, (3, 2)), _real(1, 2), "broadcast"),
        DifferentiableOp("getitem", lambda a: a[1:3], _real(4), "slice"),
        DifferentiableOp("stack", lambda a, b: T.stack([a, b], axis=1), _pair(_real(2), _real(2)), "stack"),
        DifferentiableOp(
            "concatenate", lambda a, b: T.concatenate([a, b], axis=0), _pair(_real(2), _real(2)), "concatenate",
        ),
        DifferentiableOp("fft2", F.fft2, _complex(2, 2), "centered orthonormal DFT", linear=True),
        DifferentiableOp("ifft2", F.ifft2, _complex(2, 2), "centered orthonormal inverse DFT", linear=True),
        DifferentiableOp(
            "im2col", lambda a: F.im2col(a, 3, 1, 1), _real(2, 2, 1), "patch gather", linear=True,
        ),
        DifferentiableOp(
            "conv2d", F.conv2d, _pair(_real(2, 2, 1), _real(3, 3, 1, 1)), "same convolution",
        ),
        DifferentiableOp(
            "conv2d_stride2", lambda x, k: F.conv2d(x, k, stride=2),
            _pair(_real(4, 4, 1), _real(3, 3, 1, 1)), "strided convolution",
        ),
        DifferentiableOp(
            "upsample2x", F.upsample2x, _pair(_real(2, 2, 1), _real(3, 3, 1, 1)), "transpose convolution",
        ),
        DifferentiableOp("softmax_rows", F.softmax_rows, _real(2, 2), "row softmax"),
        DifferentiableOp("sigmoid", F.sigmoid, _real(4), "logistic"),
        DifferentiableOp("softplus", F.softplus, _real(4), "softplus"),
        DifferentiableOp(
            "leaky_relu", F.leaky_relu, lambda rng: [_away_from_zero(rng, 4)], "leaky rectifier",
        ),
        DifferentiableOp("instance_norm", F.instance_norm, _real(2, 2, 1), "spatial standardization"),
    ]
    for op in entries:
        registry.register_op(op)
    return registry

"""
Tensor values and the reverse-mode tape.

A Tensor owns a numpy array and, when gradients are being recorded, the
vector-Jacobian product that maps an upstream gradient onto its parents.
Every VJP is written in terms of Tensor operations, so running a backward
pass with ``create_graph=True`` records a second tape that can itself be
differentiated (used by the gradient penalty on the discriminator).

Gradient convention for complex values: for a real loss L and z = a + ib,
the stored gradient is dL/da + i dL/db. Under this convention the gradient
of a complex-linear map y = A z is A^H applied to the gradient of y.
"""

import contextlib
import contextvars
import itertools
import logging
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.errors import ContractError, DimensionError

logger = logging.getLogger("tensor")

ArrayLike = Union["Tensor", np.ndarray, float, int, complex, Sequence]
VJP = Callable[["Tensor"], Sequence[Optional["Tensor"]]]

_tape_ids = itertools.count()
# per thread and per asyncio task
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)
_double: contextvars.ContextVar[bool] = contextvars.ContextVar("double_precision", default=False)


def real_dtype() -> type:
    return np.float64 if _double.get() else np.float32


def complex_dtype() -> type:
    return np.complex128 if _double.get() else np.complex64


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextlib.contextmanager
def enable_grad(flag: bool = True) -> Iterator[None]:
    """Turn tape recording on or off inside the block, for the calling thread or task only."""
    token = _grad_enabled.set(flag)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def no_grad():
    """Block in which no operation is recorded."""
    return enable_grad(False)


@contextlib.contextmanager
def double_precision() -> Iterator[None]:
    """Create new tensors as float64/complex128 inside the block."""
    token = _double.set(True)
    try:
        yield
    finally:
        _double.reset(token)


def _as_array(data: ArrayLike) -> np.ndarray:
    if isinstance(data, Tensor):
        return data.data
    array = np.asarray(data)
    if np.iscomplexobj(array):
        return array.astype(complex_dtype(), copy=False)
    return array.astype(real_dtype(), copy=False)


class Tensor:
    """
    An n-dimensional real or complex array carried through the tape.

    Leaves created with ``requires_grad=True`` play the role of graph
    variables: after ``backward()`` their ``grad`` holds a Tensor of the
    same shape.
    """

    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data: np.ndarray = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: Optional[Tensor] = None
        self.name = name
        self.tape_id = next(_tape_ids)
        self._parents: Tuple[Tensor, ...] = ()
        self._vjp: Optional[VJP] = None
        self._op: Optional[str] = None

    # ------------------------------------------------------------------ info

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    @property
    def element_kind(self) -> str:
        return "complex64" if self.is_complex else "real32"

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> Union[float, complex]:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        value = self.data.reshape(()).item()
        return value

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def requires_grad_(self, flag: bool = True) -> "Tensor":
        self.requires_grad = flag
        return self

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, kind={self.element_kind}{grad}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------- operators

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    # --------------------------------------------------------------- methods

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return swap_last(self)

    def broadcast_to(self, shape: Tuple[int, ...]) -> "Tensor":
        return broadcast_to(self, shape)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def abs(self) -> "Tensor":
        return absolute(self)

    def conj(self) -> "Tensor":
        return conj(self)

    def real(self) -> "Tensor":
        return real(self)

    def imag(self) -> "Tensor":
        return imag(self)

    def backward(self, grad_output: Optional["Tensor"] = None) -> None:
        """Accumulate d(self)/d(leaf) into the ``grad`` of every leaf that requires it."""
        if grad_output is None:
            if self.size != 1:
                raise ContractError(f"backward() needs a scalar, got shape {self.shape}")
            grad_output = Tensor(np.ones_like(self.data))
        order = _topological_order(self)
        grads = _propagate(self, order, grad_output, create_graph=False, keep=set())
        for node in order:
            if node.is_leaf and node.requires_grad and node.tape_id in grads:
                contribution = grads[node.tape_id].detach()
                if not node.is_complex and contribution.is_complex:
                    contribution = Tensor(contribution.data.real)
                node.grad = contribution if node.grad is None else Tensor(node.grad.data + contribution.data)


class Parameter(Tensor):
    """A learnable leaf tensor."""

    def __init__(self, data: ArrayLike, name: Optional[str] = None):
        super().__init__(np.array(_as_array(data), copy=True), requires_grad=True, name=name)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(out_data: np.ndarray, parents: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
    out = Tensor(out_data)
    if _grad_enabled.get() and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


def _reduce_to(grad: Tensor, target: Tensor) -> Tensor:
    """Sum a broadcast gradient back onto ``target``'s shape and kind."""
    shape = target.shape
    if grad.shape != shape:
        extra = grad.ndim - len(shape)
        axes = tuple(range(extra)) + tuple(
            extra + i for i, extent in enumerate(shape) if extent == 1 and grad.shape[extra + i] != 1
        )
        if axes:
            grad = tensor_sum(grad, axes, keepdims=True)
        grad = reshape(grad, shape)
    if grad.is_complex and not target.is_complex:
        grad = real(grad)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(g, b)), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b), lambda g: (_reduce_to(g, a), _reduce_to(neg(g), b)), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor):
        grad_a = _reduce_to(mul(g, conj(b)), a) if a.requires_grad else None
        grad_b = _reduce_to(mul(g, conj(a)), b) if b.requires_grad else None
        return grad_a, grad_b

    return _record(a.data * b.data, (a, b), vjp, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g: Tensor):
        grad_a = _reduce_to(div(g, conj(b)), a) if a.requires_grad else None
        grad_b = None
        if b.requires_grad:
            grad_b = _reduce_to(neg(div(mul(g, conj(out)), conj(b))), b)
        return grad_a, grad_b

    out = _record(a.data / b.data, (a, b), vjp, "div")
    return out


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (neg(g),), "neg")


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    if a.is_complex:
        raise ContractError("power() is defined for real tensors only")
    return _record(
        a.data ** exponent,
        (a,),
        lambda g: (mul(g, mul(power(a, exponent - 1), float(exponent))),),
        "pow",
    )


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def vjp(g: Tensor):
        return (mul(g, conj(out)),)

    out = _record(np.exp(a.data), (a,), vjp, "exp")
    return out


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _record(np.log(a.data), (a,), lambda g: (div(g, conj(a)),), "log")


def sqrt(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if a.is_complex:
        raise ContractError("sqrt() is defined for real tensors only")

    def vjp(g: Tensor):
        # zero gradient where the root is zero
        positive = (out.data > 0).astype(out.data.dtype)
        return (div(mul(g, positive), add(mul(out, 2.0), 1.0 - positive)),)

    out = _record(np.sqrt(a.data), (a,), vjp, "sqrt")
    return out


def absolute(a: ArrayLike) -> Tensor:
    """Elementwise modulus; real for both real and complex input."""
    a = as_tensor(a)
    if not a.is_complex:
        sign = np.sign(a.data)
        return _record(np.abs(a.data), (a,), lambda g: (mul(g, sign),), "abs")

    def vjp(g: Tensor):
        positive = (out.data > 0).astype(out.data.dtype)
        safe = add(out, 1.0 - positive)
        return (mul(to_complex(mul(g, positive)), div(a, to_complex(safe))),)

    out = _record(np.abs(a.data), (a,), vjp, "abs")
    return out


def conj(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return _record(np.conj(a.data), (a,), lambda g: (conj(g),), "conj")


def real(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return _record(a.data.real, (a,), lambda g: (to_complex(g),), "real")


def imag(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return Tensor(np.zeros_like(a.data))
    return _record(a.data.imag, (a,), lambda g: (mul(to_complex(g), 1j),), "imag")


def to_complex(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    if a.is_complex:
        return a
    return _record(a.data.astype(complex_dtype()), (a,), lambda g: (real(g),), "to_complex")


def make_complex(re: ArrayLike, im: ArrayLike) -> Tensor:
    return add(to_complex(re), mul(to_complex(im), 1j))


# ----------------------------------------------------------- shape & reduction


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    def vjp(g: Tensor):
        grad_a = _reduce_to(matmul(g, swap_last(conj(b))), a) if a.requires_grad else None
        grad_b = _reduce_to(matmul(swap_last(conj(a)), g), b) if b.requires_grad else None
        return grad_a, grad_b

    return _record(np.matmul(a.data, b.data), (a, b), vjp, "matmul")


def tensor_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    kept_shape = np.sum(a.data, axis=axis, keepdims=True).shape

    def vjp(g: Tensor):
        return (broadcast_to(reshape(g, kept_shape), a.shape),)

    return _record(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def tensor_mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    total = tensor_sum(a, axis, keepdims)
    count = a.size // max(total.size, 1)
    return mul(total, 1.0 / count)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return _record(np.reshape(a.data, shape), (a,), lambda g: (reshape(g, a.shape),), "reshape")


def transpose(a: ArrayLike, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(int(i) for i in np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (transpose(g, inverse),), "transpose")


def swap_last(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, axes)


def broadcast_to(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    if a.shape == tuple(shape):
        return a
    return _record(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_reduce_to(g, a),), "broadcast_to")


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)
    return _record(np.array(a.data[index]), (a,), lambda g: (scatter(g, index, a.shape),), "getitem")


def scatter(values: ArrayLike, index, shape: Tuple[int, ...]) -> Tensor:
    """Zero tensor of ``shape`` with ``values`` written at ``index``."""
    values = as_tensor(values)
    out = np.zeros(shape, dtype=values.data.dtype)
    out[index] = values.data
    return _record(out, (values,), lambda g: (getitem(g, index),), "scatter")


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)
    ndim = out_data.ndim
    axis = axis % ndim

    def vjp(g: Tensor):
        return tuple(getitem(g, (slice(None),) * axis + (i,)) for i in range(len(tensors)))

    return _record(out_data, tensors, vjp, "stack")


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    axis = axis % out_data.ndim
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(g: Tensor):
        return tuple(
            getitem(g, (slice(None),) * axis + (slice(int(lo), int(hi)),))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _record(out_data, tensors, vjp, "concatenate")


# ------------------------------------------------------------------- backward


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    pending: List[Tuple[Tensor, bool]] = [(root, False)]
    while pending:
        node, expanded = pending.pop()
        if expanded:
            order.append(node)
            continue
        if node.tape_id in seen:
            continue
        seen.add(node.tape_id)
        pending.append((node, True))
        for parent in node._parents:
            if parent.tape_id not in seen:
                pending.append((parent, False))
    return order


def _propagate(
    root: Tensor,
    order: List[Tensor],
    seed: Tensor,
    create_graph: bool,
    keep: set,
) -> Dict[int, Tensor]:
    grads: Dict[int, Tensor] = {root.tape_id: seed}
    with enable_grad(create_graph):
        for node in reversed(order):
            g = grads.get(node.tape_id)
            if g is None or node.is_leaf:
                continue
            if node.tape_id not in keep:
                del grads[node.tape_id]
            for parent, parent_grad in zip(node._parents, node._vjp(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                previous = grads.get(parent.tape_id)
                grads[parent.tape_id] = parent_grad if previous is None else add(previous, parent_grad)
    return grads


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    grad_output: Optional[Tensor] = None,
    create_graph: bool = False,
) -> List[Tensor]:
    """
    Gradients of ``output`` with respect to ``inputs``.

    With ``create_graph=True`` the returned tensors are themselves on the
    tape, so a loss built from them can be differentiated again.
    """
    if grad_output is None:
        if output.size != 1:
            raise ContractError(f"grad() needs a scalar output, got shape {output.shape}")
        grad_output = Tensor(np.ones_like(output.data))
    order = _topological_order(output)
    keep = {t.tape_id for t in inputs}
    grads = _propagate(output, order, grad_output, create_graph, keep)
    results = []
    for t in inputs:
        g = grads.get(t.tape_id)
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        elif g.is_complex and not t.is_complex:
            g = real(g)
        results.append(g if create_graph else g.detach())
    return results

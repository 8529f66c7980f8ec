"""
First-order optimizers.

The update rules are exposed twice: as pure functions over dictionaries of
named arrays (``adam_step``, ``rmsprop_step``), and as stateful classes
bound to a set of named Parameters, which read ``Parameter.grad`` and write
the new values back in place.
"""

import abc
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.tensor.tensor import Parameter
from src.utils.errors import ContractError

ArrayMap = Dict[str, np.ndarray]


class AdamHyper(BaseModel):
    lr: float = Field(default=1e-3, ge=0.0)
    beta1: float = Field(default=0.0, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.99, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class RMSpropHyper(BaseModel):
    lr: float = Field(default=0.1, ge=0.0)
    rho: float = Field(default=0.9, ge=0.0, lt=1.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-10, gt=0.0)


@dataclass
class AdamState:
    step: int = 0
    m: ArrayMap = field(default_factory=dict)
    v: ArrayMap = field(default_factory=dict)


@dataclass
class RMSpropState:
    mean_square: ArrayMap = field(default_factory=dict)
    moment: ArrayMap = field(default_factory=dict)


def _check_shapes(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], *slots: ArrayMap) -> None:
    for name, value in params.items():
        if name not in grads:
            raise ContractError(f"no gradient supplied for parameter {name}")
        if np.shape(grads[name]) != np.shape(value):
            raise ContractError(f"gradient for {name} has shape {np.shape(grads[name])}, parameter has {np.shape(value)}")
        for slot in slots:
            if name in slot and slot[name].shape != np.shape(value):
                raise ContractError(f"optimizer state for {name} has shape {slot[name].shape}, parameter has {np.shape(value)}")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper,
) -> Tuple[ArrayMap, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    _check_shapes(params, grads, state.m, state.v)
    t = state.step + 1
    new_params: ArrayMap = {}
    new_state = AdamState(step=t)
    for name, value in params.items():
        g = np.asarray(grads[name])
        m = hyper.beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1 ** t)
        v_hat = v / (1.0 - hyper.beta2 ** t)
        new_params[name] = (value - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)).astype(value.dtype)
        new_state.m[name] = m
        new_state.v[name] = v
    return new_params, new_state


def rmsprop_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: RMSpropState,
    hyper: RMSpropHyper,
) -> Tuple[ArrayMap, RMSpropState]:
    """
    One RMSprop update with momentum.

    The running mean square starts at one, so the first steps are not
    blown up by a near-zero denominator.
    """
    _check_shapes(params, grads, state.mean_square, state.moment)
    new_params: ArrayMap = {}
    new_state = RMSpropState()
    for name, value in params.items():
        g = np.asarray(grads[name])
        ms = hyper.rho * state.mean_square.get(name, np.ones_like(value)) + (1.0 - hyper.rho) * g * g
        mom = hyper.momentum * state.moment.get(name, np.zeros_like(value)) + hyper.lr * g / np.sqrt(ms + hyper.eps)
        new_params[name] = (value - mom).astype(value.dtype)
        new_state.mean_square[name] = ms
        new_state.moment[name] = mom
    return new_params, new_state


class BaseOptimizer(abc.ABC):
    """
    Base class for optimizers that own a set of named Parameters.
    """

    def __init__(self, params: Iterable[Tuple[str, Parameter]]) -> None:
        self.params: Dict[str, Parameter] = dict(params)
        self.logger = logging.getLogger(f"optimizer:{type(self).__name__.lower()}")

    @abc.abstractmethod
    def _update(self, values: ArrayMap, grads: ArrayMap) -> ArrayMap:
        """Return the new parameter values for the given gradients."""

    @abc.abstractmethod
    def reset(self) -> None:
        """Forget all accumulated optimizer state."""

    @property
    @abc.abstractmethod
    def lr(self) -> float:
        pass

    @abc.abstractmethod
    def set_lr(self, lr: float) -> None:
        pass

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None

    def step(self) -> None:
        """Apply one update using the gradients currently stored on the parameters."""
        values = {name: p.data for name, p in self.params.items()}
        grads = {
            name: p.grad.data if p.grad is not None else np.zeros_like(p.data)
            for name, p in self.params.items()
        }
        for name, value in self._update(values, grads).items():
            self.params[name].data = value


class Adam(BaseOptimizer):

    def __init__(self, params: Iterable[Tuple[str, Parameter]], hyper: AdamHyper = AdamHyper()) -> None:
        super().__init__(params)
        self.hyper = hyper
        self.state = AdamState()

    def _update(self, values: ArrayMap, grads: ArrayMap) -> ArrayMap:
        new_values, self.state = adam_step(values, grads, self.state, self.hyper)
        return new_values

    def reset(self) -> None:
        self.state = AdamState()

    @property
    def lr(self) -> float:
        return self.hyper.lr

    def set_lr(self, lr: float) -> None:
        self.hyper = self.hyper.model_copy(update={"lr": lr})


class RMSprop(BaseOptimizer):

    def __init__(self, params: Iterable[Tuple[str, Parameter]], hyper: RMSpropHyper = RMSpropHyper()) -> None:
        super().__init__(params)
        self.hyper = hyper
        self.state = RMSpropState()

    def _update(self, values: ArrayMap, grads: ArrayMap) -> ArrayMap:
        new_values, self.state = rmsprop_step(values, grads, self.state, self.hyper)
        return new_values

    def reset(self) -> None:
        self.state = RMSpropState()

    @property
    def lr(self) -> float:
        return self.hyper.lr

    def set_lr(self, lr: float) -> None:
        self.hyper = self.hyper.model_copy(update={"lr": lr})

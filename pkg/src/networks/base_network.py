import abc
import copy
import logging
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from src.tensor.tensor import ArrayLike, Parameter, Tensor
from src.utils.errors import ContractError


class BaseNetwork(abc.ABC):
    """
    Base class for every learnable component.

    A network owns named Parameters and named child networks. Parameter
    names are dotted paths (``layer2.ca1.query.weight``), which is also how
    they are stored in checkpoints.
    """

    def __init__(self, name: Optional[str] = None) -> None:
        """
        Initialize an empty network.

        Args:
            name: Logger suffix; defaults to the class name.
        """
        self._parameters: Dict[str, Parameter] = {}
        self._children: Dict[str, "BaseNetwork"] = {}
        self.logger = logging.getLogger(name or type(self).__name__.lower())

    def register_parameter(self, name: str, value: ArrayLike) -> Parameter:
        parameter = value if isinstance(value, Parameter) else Parameter(value, name=name)
        self._parameters[name] = parameter
        return parameter

    def register_child(self, name: str, child: "BaseNetwork") -> "BaseNetwork":
        self._children[name] = child
        return child

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, parameter in self._parameters.items():
            yield prefix + name, parameter
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """
        Overwrite parameter values in place.

        Raises:
            ContractError: On missing/unexpected names (when strict) or shape mismatch.
        """
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ContractError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, value in state.items():
            if name not in own:
                continue
            value = np.asarray(value)
            if value.shape != own[name].shape:
                raise ContractError(f"{name}: stored shape {value.shape} != parameter shape {own[name].shape}")
            own[name].data = value.astype(own[name].data.dtype, copy=True)

    def clone(self) -> "BaseNetwork":
        """Independent copy holding the same parameter values."""
        twin = copy.deepcopy(self)
        twin.zero_grad()
        return twin

    def freeze(self, flag: bool = True) -> None:
        for parameter in self.parameters():
            parameter.requires_grad = not flag

    @abc.abstractmethod
    def forward(self, *args: Any, **kwargs: Any) -> Any:
        """
        Run the network.

        Returns:
            The network output, usually a Tensor.
        """
        pass

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

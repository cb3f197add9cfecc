from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from nmtprobe.errors import StateError
from nmtprobe.numerics.tensor import Array, Tensor, default_dtype


@dataclass
class Parameter:
    """A named tensor owned by a model."""

    tensor: Tensor
    name: str
    trainable: bool = True

    @property
    def data(self) -> Array:
        return self.tensor.data

    @property
    def grad(self) -> Optional[Array]:
        return self.tensor.grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensor.shape


class ParameterStore:
    """
    An ordered, name-unique collection of parameters.

    Note:
        Insertion order is the serialization order, so two models built the same
        way write byte-identical checkpoints.
    """

    def __init__(self) -> None:
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data: Array, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise StateError(f"duplicate parameter name {name!r}")

        tensor = Tensor(data, requires_grad=trainable, name=name)
        param = Parameter(tensor=tensor, name=name, trainable=trainable)
        self._params[name] = param

        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name].tensor

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def parameter(self, name: str) -> Parameter:
        return self._params[name]

    def state(self) -> dict[str, Array]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state: Mapping[str, Array]) -> None:
        missing = [name for name in self._params if name not in state]
        unknown = [name for name in state if name not in self._params]
        if missing or unknown:
            raise StateError(
                f"parameter mismatch: missing {missing}, unexpected {unknown}"
            )

        for name, param in self._params.items():
            if state[name].shape != param.shape:
                raise StateError(
                    f"parameter {name!r} has shape {param.shape}, "
                    f"state holds {state[name].shape}"
                )
            param.tensor.data = np.array(state[name], dtype=param.data.dtype)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Array:
    """
    Uniform in ±sqrt(6 / (fan_in + fan_out)).

    Returns:
        An array of shape (fan_in, fan_out) in the current precision.
    """

    bound = np.sqrt(6.0 / (fan_in + fan_out))

    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(default_dtype())


def zeros(*shape: int) -> Array:
    return np.zeros(shape, dtype=default_dtype())


def zero_grad(params: Iterable[Parameter]) -> None:
    """Resets every trainable parameter's gradient to zeros."""

    for param in params:
        if param.trainable:
            param.tensor.grad = np.zeros_like(param.data)


def clear_grad(params: Iterable[Parameter]) -> None:
    for param in params:
        param.tensor.grad = None


def grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for param in params:
        if param.grad is not None:
            total += float(np.sum(np.square(param.grad, dtype=np.float64)))

    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """
    Rescales gradients in place so their global L2 norm is at most `max_norm`.

    Returns:
        The norm before clipping.
    """

    norm = grad_norm(params)

    if norm > max_norm > 0:
        scale = max_norm / norm
        for param in params:
            if param.grad is not None:
                param.tensor.grad = (param.grad * scale).astype(param.grad.dtype)

    return norm

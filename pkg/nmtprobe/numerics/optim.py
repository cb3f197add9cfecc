from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from nmtprobe.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from nmtprobe.errors import StateError, ValidationError
from nmtprobe.numerics.params import Parameter
from nmtprobe.numerics.tensor import Array

OPTIMIZERS = Literal["sgd", "adam"]


@dataclass
class OptimizerState:
    """
    Optimizer settings plus per-parameter buffers keyed by parameter name.

    Note:
        A learning rate of 0 is allowed; it freezes training, which the early
        stopping tests rely on.
    """

    kind: OPTIMIZERS
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    momentum: float = 0.0
    weight_decay: float = 0.0
    buffers: dict[str, dict[str, Array]] = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate < 0:
            raise ValidationError(
                f"learning rate must be non-negative, got {self.learning_rate}"
            )


def _gradient(state: OptimizerState, param: Parameter) -> Array:
    if param.grad is None:
        raise StateError(
            f"parameter {param.name!r} has no gradient; run backward before stepping"
        )

    grad = param.grad
    if state.weight_decay:
        grad = grad + state.weight_decay * param.data

    return grad


def sgd_step(state: OptimizerState, params: Sequence[Parameter]) -> None:
    """
    p ← p − lr·grad(p), then clears the gradients.

    Example:
        p=1.0, grad=0.5, lr=0.1 gives p=0.95.
    """

    trainable = [p for p in params if p.trainable]
    grads = [_gradient(state, p) for p in trainable]

    for param, grad in zip(trainable, grads):
        if state.momentum:
            buffer = state.buffers.setdefault(param.name, {})
            velocity = buffer.get("momentum", np.zeros_like(param.data))
            velocity = state.momentum * velocity + grad
            buffer["momentum"] = velocity
            grad = velocity
        param.tensor.data = (param.data - state.learning_rate * grad).astype(
            param.data.dtype
        )
        param.tensor.grad = None

    state.step_count += 1


def adam_step(state: OptimizerState, params: Sequence[Parameter]) -> None:
    """
    Adam with bias correction, then clears the gradients.

    Note:
        On the first step the update is lr·g/(|g| + ε), which is close to lr·sign(g).
    """

    trainable = [p for p in params if p.trainable]
    grads = [_gradient(state, p) for p in trainable]
    step = state.step_count + 1

    for param, grad in zip(trainable, grads):
        buffer = state.buffers.setdefault(param.name, {})
        first = buffer.get("first", np.zeros_like(param.data))
        second = buffer.get("second", np.zeros_like(param.data))

        first = state.beta1 * first + (1.0 - state.beta1) * grad
        second = state.beta2 * second + (1.0 - state.beta2) * grad * grad
        buffer["first"] = first
        buffer["second"] = second

        first_hat = first / (1.0 - state.beta1**step)
        second_hat = second / (1.0 - state.beta2**step)
        update = state.learning_rate * first_hat / (np.sqrt(second_hat) + state.epsilon)

        param.tensor.data = (param.data - update).astype(param.data.dtype)
        param.tensor.grad = None

    state.step_count = step


def step(state: OptimizerState, params: Sequence[Parameter]) -> None:
    """Dispatches to `sgd_step` or `adam_step` by `state.kind`."""

    if state.kind == "sgd":
        sgd_step(state, params)

    if state.kind == "adam":
        adam_step(state, params)

"""
Dense tensors with reverse-mode gradients on a numpy backend.

Every operation records its parents and a closure mapping the output gradient to
one gradient per parent. `backward` walks the recorded graph once, accumulates
into leaf tensors, and then releases the graph.
"""

import contextlib
from typing import Callable, Iterator, Literal, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from nmtprobe.errors import LabelError, NumericsError, ShapeError, StateError

Array = NDArray[np.floating]  # type: ignore[type-arg]
BackwardFn = Callable[[Array], Sequence[Optional[Array]]]

ACTIVATIONS = Literal["tanh", "sigmoid", "relu"]
PRECISIONS = Literal["float32", "float64"]

_state = {"dtype": np.dtype(np.float32), "grad": True}


@contextlib.contextmanager
def precision(name: Literal[PRECISIONS]) -> Iterator[None]:
    """
    Selects the dtype new tensors are created with.

    Note:
        Training runs in float32. Gradient checking replays in float64.

    Example:
        >>> with precision("float64"):
        ...     Tensor([1.0]).data.dtype
        dtype('float64')
    """

    previous = _state["dtype"]
    _state["dtype"] = np.dtype(name)
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording, for inference and finite differences."""

    previous = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = previous


def default_dtype() -> np.dtype:  # type: ignore[type-arg]
    return _state["dtype"]  # type: ignore[return-value]


class Tensor:
    """
    An n-dimensional array of reals with a gradient slot.

    Args:
        data: Anything numpy can turn into an array. Cast to the current precision.
        requires_grad: Whether gradients should flow into this tensor.
        name: Optional label, used in error messages.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: str = "",
    ) -> None:
        self.data: Array = np.array(data, dtype=default_dtype())
        self.grad: Optional[Array] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> Array:
        return self.data.copy()

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor({self.data!r}{label})"

    def __add__(self, other: "Operand") -> "Tensor":
        return add(self, other)

    def __radd__(self, other: "Operand") -> "Tensor":
        return add(other, self)

    def __sub__(self, other: "Operand") -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: "Operand") -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: "Operand") -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: "Operand") -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: object) -> "Tensor":
        return take(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self) -> "Tensor":
        return mul(tensor_sum(self), 1.0 / self.size)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def relu(self) -> "Tensor":
        return relu(self)


Operand = Union[Tensor, float, int, Array]


def _lift(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: Array, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    out.requires_grad = False
    out._parents = ()
    out._backward = None

    if _state["grad"] and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward

    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sums a broadcast gradient back down to the operand's shape."""

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


def _check_finite(x: Tensor, op: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericsError(f"{op} received non-finite input of shape {x.shape}")


def add(a: Operand, b: Operand) -> Tensor:
    x, y = _lift(a), _lift(b)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return _unbroadcast(grad, x.shape), _unbroadcast(grad, y.shape)

    return _result(x.data + y.data, (x, y), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    x, y = _lift(a), _lift(b)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return _unbroadcast(grad, x.shape), _unbroadcast(-grad, y.shape)

    return _result(x.data - y.data, (x, y), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    x, y = _lift(a), _lift(b)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (
            _unbroadcast(grad * y.data, x.shape),
            _unbroadcast(grad * x.data, y.shape),
        )

    return _result(x.data * y.data, (x, y), backward)


def neg(a: Tensor) -> Tensor:
    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (-grad,)

    return _result(-a.data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product, batched over any leading dimensions.

    Args:
        a: Tensor of shape (..., m, k).
        b: Tensor of shape (..., k, n).

    Returns:
        Tensor of shape (..., m, n).

    Examples:
        >>> matmul(Tensor([[1, 2], [3, 4]]), Tensor([[0], [1]])).data.tolist()
        [[2.0], [4.0]]
    """

    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad * (1.0 - out_data * out_data),)

    return _result(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.data
    out_data = np.empty_like(x)
    positive = x >= 0
    out_data[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out_data[~positive] = exp_x / (1.0 + exp_x)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad * out_data * (1.0 - out_data),)

    return _result(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    # relu'(0) = 0
    active = a.data > 0

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad * active,)

    return _result(np.where(active, a.data, 0).astype(a.data.dtype), (a,), backward)


ACTIVATION_FUNCTIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
}


def activation(x: Tensor, kind: Literal[ACTIVATIONS]) -> Tensor:
    """
    Applies an elementwise non-linearity.

    Args:
        x: The tensor to affect. Must be finite.
        kind: One of "tanh", "sigmoid" or "relu".

    Returns:
        A tensor of the same shape.

    Examples:
        >>> activation(Tensor([-1, 0, 2]), "relu").data.tolist()
        [0.0, 0.0, 2.0]

        >>> activation(Tensor([0]), "sigmoid").data.tolist()
        [0.5]
    """

    _check_finite(x, kind)

    return ACTIVATION_FUNCTIONS[kind](x)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad * out_data,)

    return _result(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad / a.data,)

    return _result(np.log(a.data), (a,), backward)


def absolute(a: Tensor) -> Tensor:
    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad * np.sign(a.data),)

    return _result(np.abs(a.data), (a,), backward)


def tensor_sum(
    a: Tensor,
    axis: Optional[int] = None,
    keepdims: bool = False,
) -> Tensor:
    def backward(grad: Array) -> Sequence[Optional[Array]]:
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape),)

    out_data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    return _result(out_data, (a,), backward)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad.reshape(a.shape),)

    return _result(a.data.reshape(tuple(shape)), (a,), backward)


def _is_basic_index(index: object) -> bool:
    parts = index if isinstance(index, tuple) else (index,)

    return all(isinstance(part, (int, slice)) or part is Ellipsis for part in parts)


def take(a: Tensor, index: object) -> Tensor:
    """Basic and integer-array indexing; repeated indices accumulate gradient."""

    basic = _is_basic_index(index)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        full = np.zeros_like(a.data)
        if basic:
            full[index] = grad  # type: ignore[index]
        else:
            np.add.at(full, index, grad)  # type: ignore[arg-type]
        return (full,)

    return _result(a.data[index], (a,), backward)  # type: ignore[index]


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")

    sizes = [t.shape[axis] for t in tensors]
    edges = np.cumsum(sizes)[:-1]

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return np.split(grad, edges, axis=axis)

    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as error:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"cannot concatenate shapes {shapes}: {error}") from error

    return _result(out_data, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("stack needs at least one tensor")

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return [np.take(grad, i, axis=axis) for i in range(len(tensors))]

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def embedding(weight: Tensor, indices: ArrayLike) -> Tensor:
    """
    Gathers rows of `weight`.

    Errors:
        LabelError naming the first out-of-range position.
    """

    ids = np.asarray(indices, dtype=np.int64)
    bad = np.argwhere((ids < 0) | (ids >= weight.shape[0]))
    if bad.size:
        position = tuple(int(i) for i in bad[0])
        raise LabelError(
            f"index {int(ids[position])} at position {position} is outside "
            f"a table of {weight.shape[0]} rows"
        )

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        full = np.zeros_like(weight.data)
        np.add.at(full, ids, grad)
        return (full,)

    return _result(weight.data[ids], (weight,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """
    Normalizes scores into probabilities along an axis.

    Note:
        Subtracts the maximum first, so [1000, 0] does not overflow.

    Examples:
        >>> softmax(Tensor([0, 0])).data.tolist()
        [0.5, 0.5]
    """

    if x.size == 0:
        raise ShapeError(f"softmax of an empty tensor of shape {x.shape}")

    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out_data = exps / exps.sum(axis=axis, keepdims=True)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        inner = (grad * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (grad - inner),)

    return _result(out_data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.size == 0:
        raise ShapeError(f"log_softmax of an empty tensor of shape {x.shape}")

    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        return (grad - np.exp(out_data) * grad.sum(axis=axis, keepdims=True),)

    return _result(out_data, (x,), backward)


def cross_entropy(
    logits: Tensor,
    gold: ArrayLike,
    weights: Optional[ArrayLike] = None,
    reduction: Literal["mean", "sum"] = "mean",
) -> Tensor:
    """
    Negative log-probability of the gold classes.

    Args:
        logits: Tensor of shape (batch, classes).
        gold: One class index per row.
        weights: Optional per-row weights; zero masks a row out (padding).
        reduction: "mean" divides by the total weight, "sum" does not.

    Returns:
        A scalar tensor.

    Examples:
        >>> round(cross_entropy(Tensor([[0.0, 0.0]]), [0]).item(), 6)
        0.693147
    """

    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (batch, classes), got {logits.shape}")

    rows, classes = logits.shape
    targets = np.asarray(gold, dtype=np.int64).reshape(-1)
    if targets.shape[0] != rows:
        raise ShapeError(f"{targets.shape[0]} gold labels for {rows} rows of logits")

    for row, target in enumerate(targets):
        if not 0 <= target < classes:
            raise LabelError(
                f"row {row}: gold index {int(target)} outside 0..{classes - 1}"
            )

    dtype = logits.data.dtype
    row_weights = (
        np.ones(rows, dtype=dtype)
        if weights is None
        else np.asarray(weights, dtype=dtype).reshape(-1)
    )
    total = float(row_weights.sum()) if reduction == "mean" else 1.0
    if total <= 0:
        raise ShapeError("cross_entropy over rows whose weights are all zero")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(rows), targets]
    loss = np.asarray(-(row_weights * picked).sum() / total, dtype=dtype)

    def backward(grad: Array) -> Sequence[Optional[Array]]:
        probs = np.exp(log_probs)
        probs[np.arange(rows), targets] -= 1.0
        return (probs * (row_weights / total)[:, None] * grad,)

    return _result(loss, (logits,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout. A rate of 0 returns `x` untouched."""

    if rate <= 0.0:
        return x

    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    return mul(x, keep)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]

    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    return order


def _released(grad: Array) -> Sequence[Optional[Array]]:
    raise StateError(
        "backward already ran through this graph; run a fresh forward pass first"
    )


def backward(loss: Tensor) -> None:
    """
    Populates `grad` on every leaf tensor the loss depends on.

    Note:
        Gradients accumulate into existing `grad` arrays. The graph is released
        afterwards, so a second call on the same loss raises a StateError.

    Args:
        loss: A single-valued tensor produced by operations in this module.
    """

    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    if loss._backward is None:
        raise StateError("loss does not depend on any tensor that requires grad")

    order = _topological_order(loss)
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(order):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue

        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue

        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    for node in order:
        if node._backward is not None:
            node._backward = _released
            node._parents = ()

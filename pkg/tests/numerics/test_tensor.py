import numpy as np
import pytest
from numpy.testing import assert_allclose

from nmtprobe.errors import LabelError, NumericsError, ShapeError, StateError
from nmtprobe.numerics.tensor import (
    Tensor,
    activation,
    backward,
    concat,
    cross_entropy,
    embedding,
    log_softmax,
    matmul,
    no_grad,
    precision,
    softmax,
)


def test_activation() -> None:
    assertions = {
        "relu": [0.0, 0.0, 2.0],
        "sigmoid": [1 / (1 + np.e), 0.5, 1 / (1 + np.exp(-2.0))],
        "tanh": [np.tanh(-1.0), 0.0, np.tanh(2.0)],
    }

    for kind, expected in assertions.items():
        out = activation(Tensor([-1.0, 0.0, 2.0]), kind)  # type: ignore[arg-type]
        assert_allclose(out.data, expected, rtol=1e-6)


def test_activation_rejects_non_finite() -> None:
    with pytest.raises(NumericsError):
        activation(Tensor([np.nan, 1.0]), "tanh")


def test_relu_gradient_at_zero() -> None:
    x = Tensor([-1.0, 0.0, 3.0], requires_grad=True)
    backward(activation(x, "relu").sum())

    assert x.grad is not None
    assert x.grad.tolist() == [0.0, 0.0, 1.0]


def test_sigmoid_extremes() -> None:
    out = activation(Tensor([-1000.0, 1000.0]), "sigmoid")

    assert np.all(np.isfinite(out.data))
    assert_allclose(out.data, [0.0, 1.0])


def test_matmul() -> None:
    out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[0], [1]]))

    assert out.data.tolist() == [[2.0], [4.0]]

    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((5, 2))))


def test_matmul_gradient() -> None:
    a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    b = Tensor([[1.0], [-1.0]], requires_grad=True)
    backward((a @ b).sum())

    assert a.grad is not None and b.grad is not None
    assert a.grad.tolist() == [[1.0, -1.0], [1.0, -1.0]]
    assert b.grad.tolist() == [[4.0], [6.0]]


def test_broadcast_gradient() -> None:
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    bias = Tensor([1.0, 2.0], requires_grad=True)
    backward((x + bias).sum())

    assert bias.grad is not None
    assert bias.grad.tolist() == [3.0, 3.0]


def test_softmax() -> None:
    assertions = {
        (0.0, 0.0): [0.5, 0.5],
        (1000.0, 0.0): [1.0, 0.0],
    }

    for scores, expected in assertions.items():
        out = softmax(Tensor(scores))
        assert np.all(np.isfinite(out.data))
        assert_allclose(out.data, expected, atol=1e-7)


def test_softmax_empty() -> None:
    with pytest.raises(ShapeError):
        softmax(Tensor(np.zeros(0)))


def test_log_softmax_matches_softmax() -> None:
    scores = Tensor([[1.0, 2.0, 3.0], [0.0, -1.0, 5.0]])

    assert_allclose(
        np.exp(log_softmax(scores).data), softmax(scores).data, rtol=1e-6
    )


def test_cross_entropy() -> None:
    assert round(cross_entropy(Tensor([[0.0, 0.0]]), [0]).item(), 6) == 0.693147

    with pytest.raises(LabelError):
        cross_entropy(Tensor([[0.0, 0.0]]), [2])

    with pytest.raises(ShapeError):
        cross_entropy(Tensor([[0.0, 0.0]]), [0, 1])


def test_cross_entropy_weights_mask_rows() -> None:
    logits = Tensor([[2.0, 0.0], [0.0, 5.0]], requires_grad=True)
    loss = cross_entropy(logits, [0, 0], weights=[1.0, 0.0])
    backward(loss)

    expected = -np.log(np.exp(2.0) / (np.exp(2.0) + 1.0))
    assert_allclose(loss.item(), expected, rtol=1e-6)
    assert logits.grad is not None
    assert logits.grad[1].tolist() == [0.0, 0.0]


def test_embedding_accumulates_repeated_rows() -> None:
    weight = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    backward(embedding(weight, [2, 0, 2]).sum())

    assert weight.grad is not None
    assert weight.grad.tolist() == [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]


def test_embedding_out_of_range() -> None:
    with pytest.raises(LabelError, match="index 7 at position"):
        embedding(Tensor(np.zeros((3, 2))), [0, 7])


def test_concat_gradient_splits() -> None:
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0], requires_grad=True)
    out = concat([a, b])
    backward((out * Tensor([1.0, 2.0, 3.0])).sum())

    assert out.data.tolist() == [1.0, 2.0, 3.0]
    assert a.grad is not None and b.grad is not None
    assert a.grad.tolist() == [1.0, 2.0]
    assert b.grad.tolist() == [3.0]


def test_backward_twice_fails() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = (x * x).sum()
    backward(y)

    with pytest.raises(StateError):
        backward(y)


def test_backward_needs_scalar() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)

    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_gradients_accumulate() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    backward((x * 3.0).sum())
    backward((x * 3.0).sum())

    assert x.grad is not None
    assert x.grad.tolist() == [6.0, 6.0]


def test_no_grad_records_nothing() -> None:
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2.0

    assert not y.requires_grad

    with pytest.raises(StateError):
        backward(y.sum())


def test_precision() -> None:
    assert Tensor([1.0]).data.dtype == np.float32

    with precision("float64"):
        assert Tensor([1.0]).data.dtype == np.float64

    assert Tensor([1.0]).data.dtype == np.float32


def test_slicing_gradient() -> None:
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(x[:, 1:].sum())

    assert x.grad is not None
    assert x.grad.tolist() == [[0.0, 1.0, 1.0], [0.0, 1.0, 1.0]]

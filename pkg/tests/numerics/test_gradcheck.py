import numpy as np
import pytest

from nmtprobe.errors import GradCheckError
from nmtprobe.numerics.gradcheck import grad_check, relative_error
from nmtprobe.numerics.params import ParameterStore
from nmtprobe.numerics.tensor import Tensor, _result


def test_relative_error() -> None:
    assertions = {
        (1.0, 1.0): 0.0,
        (2.0, 1.0): 0.5,
        (0.0, 0.0): 0.0,
        (1e-9, 0.0): 1e-4,
    }

    for (analytic, numeric), expected in assertions.items():
        assert relative_error(analytic, numeric) == pytest.approx(expected)


def test_grad_check_passes() -> None:
    rng = np.random.default_rng(0)
    store = ParameterStore()
    store.add("w", rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))

    def forward() -> Tensor:
        return ((Tensor(x) @ store["w"]).tanh() * 2.0).sum()

    report = grad_check(forward, store.parameters())

    assert report.passed
    assert report.max_error < 1e-6
    assert store["w"].data.dtype == np.float32


def test_grad_check_catches_wrong_backward() -> None:
    store = ParameterStore()
    store.add("w", np.array([0.3, -0.7, 1.1]))

    def square_with_wrong_gradient(a: Tensor) -> Tensor:
        return _result(a.data * a.data, (a,), lambda grad: (grad * a.data,))

    def forward() -> Tensor:
        return square_with_wrong_gradient(store["w"]).sum()

    report = grad_check(forward, store.parameters())

    assert not report.passed
    assert report.failures() == ["w"]
    assert report.max_error == pytest.approx(0.5, rel=1e-3)


def test_grad_check_sampling_needs_rng() -> None:
    store = ParameterStore()
    store.add("w", np.ones(10))

    with pytest.raises(GradCheckError):
        grad_check(lambda: store["w"].sum(), store.parameters(), samples=3)


def test_grad_check_nondeterministic_forward() -> None:
    store = ParameterStore()
    store.add("w", np.ones(2))
    rng = np.random.default_rng(0)

    def forward() -> Tensor:
        return (store["w"] * Tensor(rng.normal(size=2))).sum()

    with pytest.raises(GradCheckError, match="not deterministic"):
        grad_check(forward, store.parameters())

import numpy as np
import pytest

from nmtprobe.gradsuite import COMPONENTS, run_suite
from nmtprobe.numerics.tensor import Tensor, _result


def test_every_component_passes() -> None:
    reports = run_suite(seeds=range(2))

    assert list(reports) == list(COMPONENTS)
    for name, report in reports.items():
        assert report.passed, f"{name}: {report.failures()}"
        assert report.max_error < 1e-4


@pytest.mark.slow
def test_every_component_passes_on_ten_seeds() -> None:
    reports = run_suite(seeds=range(10), samples=None)

    assert all(report.passed for report in reports.values())


def test_corrupted_backward_is_caught(monkeypatch: pytest.MonkeyPatch) -> None:
    def tanh_with_identity_gradient(a: Tensor) -> Tensor:
        return _result(np.tanh(a.data), (a,), lambda grad: (grad,))

    monkeypatch.setattr("nmtprobe.seq2seq.lstm.tanh", tanh_with_identity_gradient)

    reports = run_suite(seeds=range(1), components=["lstm_cell", "mlp"])

    assert not reports["lstm_cell"].passed
    assert "cell.w_input" in reports["lstm_cell"].failures()
    assert reports["mlp"].passed

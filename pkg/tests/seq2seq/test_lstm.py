import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nmtprobe.errors import ShapeError
from nmtprobe.numerics.params import ParameterStore
from nmtprobe.numerics.tensor import Tensor
from nmtprobe.seq2seq.lstm import LstmCellParams, init_lstm_cell, lstm_cell_step


def _sigmoid(value: float) -> float:
    return 1.0 / (1.0 + math.exp(-value))


def _scalar_step(
    x: list[float],
    h: list[float],
    c: list[float],
    params: LstmCellParams,
) -> tuple[list[float], list[float]]:
    """Gate by gate, unit by unit."""

    d = params.hidden_size
    w_input = params.w_input.data.astype(float)
    w_recurrent = params.w_recurrent.data.astype(float)
    bias = params.bias.data.astype(float)

    def pre(gate: int, unit: int) -> float:
        column = gate * d + unit
        total = float(bias[column])
        for k, value in enumerate(x):
            total += value * float(w_input[k, column])
        for k, value in enumerate(h):
            total += value * float(w_recurrent[k, column])
        return total

    h_next = []
    c_next = []
    for unit in range(d):
        i = _sigmoid(pre(0, unit))
        f = _sigmoid(pre(1, unit))
        g = math.tanh(pre(2, unit))
        o = _sigmoid(pre(3, unit))
        cell = f * c[unit] + i * g
        c_next.append(cell)
        h_next.append(o * math.tanh(cell))

    return h_next, c_next


def _cell(input_size: int = 3, hidden_size: int = 2) -> LstmCellParams:
    store = ParameterStore()
    params = init_lstm_cell(
        store, "cell", np.random.default_rng(0), input_size, hidden_size
    )
    params.bias.data = np.random.default_rng(1).normal(size=4 * hidden_size)
    params.bias.data = params.bias.data.astype(np.float32)
    return params


def test_lstm_cell_step_matches_scalar_loop() -> None:
    params = _cell()
    x, h, c = [0.5, -1.0, 0.25], [0.1, -0.3], [0.7, 0.2]

    h_next, c_next = lstm_cell_step(Tensor(x), Tensor(h), Tensor(c), params)
    expected_h, expected_c = _scalar_step(x, h, c, params)

    assert_allclose(h_next.data, expected_h, atol=1e-6)
    assert_allclose(c_next.data, expected_c, atol=1e-6)


def test_lstm_cell_step_zero_weights() -> None:
    zero = Tensor(np.zeros((2, 8)))
    params = LstmCellParams(zero, zero, Tensor(np.zeros(8)))

    assertions = {
        0.0: (0.0, 0.0),
        1.0: (0.5 * math.tanh(0.5), 0.5),
    }

    for cell, (expected_h, expected_c) in assertions.items():
        h, c = lstm_cell_step(
            Tensor(np.zeros(2)), Tensor(np.zeros(2)), Tensor([cell, cell]), params
        )
        assert_allclose(h.data, [expected_h] * 2, atol=1e-7)
        assert_allclose(c.data, [expected_c] * 2, atol=1e-7)


def test_forget_bias_starts_at_one() -> None:
    store = ParameterStore()
    params = init_lstm_cell(store, "cell", np.random.default_rng(0), 3, 2)

    assert params.bias.data.tolist() == [0, 0, 1, 1, 0, 0, 0, 0]
    assert store.names() == ["cell.w_input", "cell.w_recurrent", "cell.bias"]


def test_lstm_cell_step_batch_matches_rows() -> None:
    params = _cell()
    rng = np.random.default_rng(2)
    x, h, c = rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), rng.normal(size=(4, 2))

    batch_h, batch_c = lstm_cell_step(Tensor(x), Tensor(h), Tensor(c), params)

    for row in range(4):
        row_h, row_c = lstm_cell_step(
            Tensor(x[row]), Tensor(h[row]), Tensor(c[row]), params
        )
        assert_allclose(batch_h.data[row], row_h.data, atol=1e-6)
        assert_allclose(batch_c.data[row], row_c.data, atol=1e-6)


def test_lstm_cell_step_shape_mismatch() -> None:
    params = _cell()

    with pytest.raises(ShapeError):
        lstm_cell_step(
            Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), params
        )

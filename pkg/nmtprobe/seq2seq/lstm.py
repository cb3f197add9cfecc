from dataclasses import dataclass

import numpy as np

from nmtprobe.constants import FORGET_BIAS
from nmtprobe.errors import ShapeError
from nmtprobe.numerics.params import ParameterStore, glorot, zeros
from nmtprobe.numerics.tensor import Array, Tensor, sigmoid, tanh

# gate blocks inside the fused weight matrices, in this order
GATES = ["input", "forget", "cell", "output"]


@dataclass
class LstmCellParams:
    """
    Fused gate weights: columns are [input | forget | cell | output] blocks of width d.
    """

    w_input: Tensor
    w_recurrent: Tensor
    bias: Tensor

    @property
    def input_size(self) -> int:
        return self.w_input.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_recurrent.shape[0]


@dataclass
class EncoderOutput:
    """
    Hidden and cell states of one sentence.

    Note:
        `states[layer][0]` is the forward direction, `states[layer][1]` the backward
        one, each of shape (sentence_length, d) in token order. The backward row at
        position 0 is the state computed last, after the whole sentence was read.
    """

    states: list[list[Array]]
    cells: list[list[Array]]
    sentence_length: int

    @property
    def top_forward(self) -> Array:
        return self.states[-1][0]

    @property
    def top_backward(self) -> Array:
        return self.states[-1][1]

    def top_states(self) -> Array:
        """Per position [forward ; backward] of the top layer, shape (n, 2d)."""

        return np.concatenate([self.top_forward, self.top_backward], axis=1)


def init_lstm_cell(
    store: ParameterStore,
    prefix: str,
    rng: np.random.Generator,
    input_size: int,
    hidden_size: int,
) -> LstmCellParams:
    """
    Registers Glorot gate weights and zero biases, with the forget bias at 1.0.
    """

    w_input = np.concatenate(
        [glorot(rng, input_size, hidden_size) for _ in GATES], axis=1
    )
    w_recurrent = np.concatenate(
        [glorot(rng, hidden_size, hidden_size) for _ in GATES], axis=1
    )
    bias = zeros(4 * hidden_size)
    bias[hidden_size : 2 * hidden_size] = FORGET_BIAS

    return LstmCellParams(
        w_input=store.add(f"{prefix}.w_input", w_input).tensor,
        w_recurrent=store.add(f"{prefix}.w_recurrent", w_recurrent).tensor,
        bias=store.add(f"{prefix}.bias", bias).tensor,
    )


def lstm_cell_step(
    x: Tensor,
    h: Tensor,
    c: Tensor,
    params: LstmCellParams,
) -> tuple[Tensor, Tensor]:
    """
    One LSTM step.

    Note:
        c' = f⊙c + i⊙g and h' = o⊙tanh(c'), with sigmoid gates i, f, o and a tanh
        candidate g. Inputs may be single vectors or (batch, size) matrices.

    Args:
        x: Input of size `params.input_size`.
        h: Previous hidden state of size d.
        c: Previous cell state of size d.
        params: The cell's weights.

    Returns:
        The new (h, c), shaped like the inputs.

    Example:
        With all-zero weights and inputs, every gate is 0.5 and the candidate is 0,
        so both outputs are zero.
    """

    d = params.hidden_size
    if x.shape[-1] != params.input_size or h.shape[-1] != d or c.shape[-1] != d:
        raise ShapeError(
            f"lstm cell expects x[..., {params.input_size}], h and c [..., {d}]; "
            f"got {x.shape}, {h.shape}, {c.shape}"
        )

    vector = x.ndim == 1
    if vector:
        x, h, c = x.reshape(1, -1), h.reshape(1, -1), c.reshape(1, -1)

    z = x @ params.w_input + h @ params.w_recurrent + params.bias
    i = sigmoid(z[:, 0:d])
    f = sigmoid(z[:, d : 2 * d])
    g = tanh(z[:, 2 * d : 3 * d])
    o = sigmoid(z[:, 3 * d : 4 * d])

    c_next = f * c + i * g
    h_next = o * tanh(c_next)

    if vector:
        return h_next.reshape(d), c_next.reshape(d)

    return h_next, c_next

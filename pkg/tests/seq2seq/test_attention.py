import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nmtprobe.errors import InputError, ShapeError
from nmtprobe.numerics.params import ParameterStore
from nmtprobe.numerics.tensor import Tensor
from nmtprobe.seq2seq.attention import AttentionParams, attention, init_attention


def _params(dec_size: int = 2, enc_size: int = 4) -> AttentionParams:
    store = ParameterStore()
    return init_attention(
        store, "att", np.random.default_rng(0), dec_size, enc_size, 3
    )


def _loop_attention(
    dec: list[float],
    enc: list[list[float]],
    params: AttentionParams,
) -> tuple[list[float], list[float]]:
    w_dec = params.w_dec.data.astype(float)
    w_enc = params.w_enc.data.astype(float)
    bias = params.bias.data.astype(float)
    v = params.v.data.astype(float)

    scores = []
    for state in enc:
        score = 0.0
        for a in range(len(bias)):
            hidden = float(bias[a])
            hidden += sum(dec[k] * float(w_dec[k, a]) for k in range(len(dec)))
            hidden += sum(state[k] * float(w_enc[k, a]) for k in range(len(state)))
            score += math.tanh(hidden) * float(v[a, 0])
        scores.append(score)

    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    weights = [e / sum(exps) for e in exps]
    context = [
        sum(weights[i] * enc[i][k] for i in range(len(enc)))
        for k in range(len(enc[0]))
    ]

    return context, weights


def test_attention_matches_loop() -> None:
    params = _params()
    rng = np.random.default_rng(1)
    dec = rng.normal(size=2).tolist()
    enc = rng.normal(size=(3, 4)).tolist()

    context, weights = attention(Tensor(dec), Tensor(enc), params)
    expected_context, expected_weights = _loop_attention(dec, enc, params)

    assert_allclose(weights.data, expected_weights, atol=1e-6)
    assert_allclose(context.data, expected_context, atol=1e-6)
    assert weights.data.sum() == pytest.approx(1.0, abs=1e-6)


def test_attention_single_position() -> None:
    state = [0.5, -0.5, 1.0, 2.0]
    context, weights = attention(Tensor([0.3, 0.1]), Tensor([state]), _params())

    assert weights.data.tolist() == [1.0]
    assert_allclose(context.data, state)


def test_attention_mask_ignores_padding() -> None:
    params = _params()
    rng = np.random.default_rng(2)
    dec = rng.normal(size=(1, 2))
    enc = rng.normal(size=(1, 3, 4))
    padded = np.concatenate([enc, rng.normal(size=(1, 2, 4))], axis=1)
    mask = np.array([[1.0, 1.0, 1.0, 0.0, 0.0]])

    context, weights = attention(Tensor(dec), Tensor(enc), params)
    padded_context, padded_weights = attention(
        Tensor(dec), Tensor(padded), params, mask
    )

    assert padded_weights.data[0, 3:].tolist() == [0.0, 0.0]
    assert_allclose(padded_weights.data[0, :3], weights.data[0], atol=1e-6)
    assert_allclose(padded_context.data, context.data, atol=1e-6)


def test_attention_errors() -> None:
    params = _params()

    with pytest.raises(InputError):
        attention(Tensor([0.0, 0.0]), Tensor(np.zeros((0, 4))), params)

    with pytest.raises(ShapeError):
        attention(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 5, 4))), params)

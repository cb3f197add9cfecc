from dataclasses import dataclass
from typing import Optional

import numpy as np

from nmtprobe.errors import InputError, ShapeError
from nmtprobe.numerics.params import ParameterStore, glorot, zeros
from nmtprobe.numerics.tensor import Array, Tensor, softmax, tanh

# added to scores of padded encoder positions
MASK_SCORE = -1e9


@dataclass
class AttentionParams:
    """Additive scoring: v · tanh(W_dec·s + W_enc·e_i + b)."""

    w_dec: Tensor
    w_enc: Tensor
    bias: Tensor
    v: Tensor


def init_attention(
    store: ParameterStore,
    prefix: str,
    rng: np.random.Generator,
    dec_size: int,
    enc_size: int,
    attention_size: int,
) -> AttentionParams:
    w_dec = glorot(rng, dec_size, attention_size)
    w_enc = glorot(rng, enc_size, attention_size)

    return AttentionParams(
        w_dec=store.add(f"{prefix}.w_dec", w_dec).tensor,
        w_enc=store.add(f"{prefix}.w_enc", w_enc).tensor,
        bias=store.add(f"{prefix}.bias", zeros(attention_size)).tensor,
        v=store.add(f"{prefix}.v", glorot(rng, attention_size, 1)).tensor,
    )


def attention_keys(enc_states: Tensor, params: AttentionParams) -> Tensor:
    """W_enc·e_i for every position; computed once per encoded batch."""

    return enc_states @ params.w_enc


def attention(
    dec_state: Tensor,
    enc_states: Tensor,
    params: AttentionParams,
    mask: Optional[Array] = None,
    keys: Optional[Tensor] = None,
) -> tuple[Tensor, Tensor]:
    """
    Attends from a decoder state over encoder states.

    Args:
        dec_state: Shape (d,) or (batch, d).
        enc_states: Shape (n, 2d) or (batch, n, 2d).
        params: Scoring weights.
        mask: Optional (batch, n) array, 1 for real positions and 0 for padding.
        keys: Precomputed `attention_keys(enc_states, params)`.

    Returns:
        The context, shape (2d,) or (batch, 2d), and the weights, shape (n,) or
        (batch, n). Weights over real positions sum to 1.

    Examples:
        With a single encoder position the weight is 1.0 and the context is that
        position's state.
    """

    single = dec_state.ndim == 1
    if single:
        dec_state = dec_state.reshape(1, -1)
        enc_states = enc_states.reshape(1, *enc_states.shape)
        keys = keys.reshape(1, *keys.shape) if keys is not None else None

    if enc_states.ndim != 3 or enc_states.shape[1] == 0:
        raise InputError(
            f"attention needs encoder states, got shape {enc_states.shape}"
        )
    if enc_states.shape[0] != dec_state.shape[0]:
        raise ShapeError(
            f"batch mismatch: decoder {dec_state.shape}, encoder {enc_states.shape}"
        )

    batch, length, width = enc_states.shape
    if keys is None:
        keys = attention_keys(enc_states, params)

    query = (dec_state @ params.w_dec + params.bias).reshape(batch, 1, -1)
    scores = (tanh(keys + query) @ params.v).reshape(batch, length)
    if mask is not None:
        scores = scores + (1.0 - mask) * MASK_SCORE

    weights = softmax(scores, axis=-1)
    context = (weights.reshape(batch, 1, length) @ enc_states).reshape(batch, width)

    if single:
        return context.reshape(width), weights.reshape(length)

    return context, weights

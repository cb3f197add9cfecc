"""
Bidirectional LSTM encoder with an attention LSTM decoder.
"""

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from nmtprobe.constants import (
    BOS,
    EOS,
    MAX_TRAIN_LEN,
    NMT_BATCH_SIZE,
    NMT_CLIP_NORM,
    NMT_EVAL_EVERY,
    NMT_LEARNING_RATE,
    NMT_LR_DECAY,
    NMT_MAX_STEPS,
    NMT_PATIENCE,
    PAD,
)
from nmtprobe.errors import InputError, ValidationError
from nmtprobe.numerics.optim import OPTIMIZERS
from nmtprobe.numerics.params import Parameter, ParameterStore, glorot, zeros
from nmtprobe.numerics.tensor import (
    Array,
    Tensor,
    concat,
    cross_entropy,
    default_dtype,
    dropout,
    embedding,
    no_grad,
    stack,
    tanh,
)
from nmtprobe.records import dataclass_record, from_dataclass_record
from nmtprobe.seq2seq.attention import (
    AttentionParams,
    attention,
    attention_keys,
    init_attention,
)
from nmtprobe.seq2seq.lstm import (
    EncoderOutput,
    LstmCellParams,
    init_lstm_cell,
    lstm_cell_step,
)

# source ids and target ids, without boundary tokens
EncodedPair = tuple[list[int], list[int]]


@dataclass(frozen=True)
class NmtConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    d: int = 500
    layers: int = 4
    max_train_len: int = MAX_TRAIN_LEN
    optimizer: OPTIMIZERS = "sgd"
    learning_rate: float = NMT_LEARNING_RATE
    lr_decay: float = NMT_LR_DECAY
    clip_norm: float = NMT_CLIP_NORM
    batch_size: int = NMT_BATCH_SIZE
    eval_every: int = NMT_EVAL_EVERY
    patience: int = NMT_PATIENCE
    max_steps: int = NMT_MAX_STEPS
    dropout: float = 0.0
    tie_directions: bool = False

    def __post_init__(self) -> None:
        if self.d < 1 or self.layers < 1:
            raise ValidationError(
                f"need d ≥ 1 and layers ≥ 1, got d={self.d}, layers={self.layers}"
            )
        if min(self.src_vocab_size, self.tgt_vocab_size) < 5:
            raise ValidationError("vocabularies need room for the 4 reserved tokens")
        if self.batch_size < 1 or self.eval_every < 1 or self.patience < 1:
            raise ValidationError("batch_size, eval_every and patience must be ≥ 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0 or not 0.0 < self.lr_decay <= 1.0:
            raise ValidationError(
                f"need learning_rate ≥ 0 and lr_decay in (0, 1], got "
                f"{self.learning_rate}, {self.lr_decay}"
            )
        if self.max_train_len < 1 or self.max_steps < 1:
            raise ValidationError("max_train_len and max_steps must be ≥ 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_record(self) -> dict[str, str]:
        return dataclass_record(self)

    @classmethod
    def from_record(cls, record: Mapping[str, str]) -> "NmtConfig":
        return from_dataclass_record(cls, record)


@dataclass
class EncodedBatch:
    """
    Encoder results for a padded batch.

    Note:
        `memory` holds top-layer [forward ; backward] states, shape (batch, n, 2d).
        `finals` holds, per layer, the final (h_fwd, h_bwd, c_fwd, c_bwd).
    """

    memory: Tensor
    keys: Tensor
    mask: Array
    lengths: list[int]
    finals: list[tuple[Tensor, Tensor, Tensor, Tensor]]
    layer_states: list[tuple[list[Tensor], list[Tensor], list[Tensor], list[Tensor]]]


@dataclass
class DecoderState:
    hidden: list[Tensor]
    cells: list[Tensor]
    feed: Tensor
    attention: Optional[Tensor] = None


class NmtModel:
    """
    Parameters and shapes of one translation model.

    Args:
        config: Sizes and training settings.
        rng: Source of initial weights.
    """

    def __init__(self, config: NmtConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.params = ParameterStore()
        d = config.d

        self.src_embed = self.params.add(
            "src_embed", glorot(rng, config.src_vocab_size, d)
        ).tensor
        self.tgt_embed = self.params.add(
            "tgt_embed", glorot(rng, config.tgt_vocab_size, d)
        ).tensor

        self.encoder: list[dict[str, LstmCellParams]] = []
        for layer in range(config.layers):
            size = d if layer == 0 else 2 * d
            forward = init_lstm_cell(self.params, f"enc.{layer}.fwd", rng, size, d)
            backward = (
                forward
                if config.tie_directions
                else init_lstm_cell(self.params, f"enc.{layer}.bwd", rng, size, d)
            )
            self.encoder.append({"fwd": forward, "bwd": backward})

        self.bridge: list[dict[str, Tensor]] = []
        for layer in range(config.layers):
            initial = {
                "w_h": glorot(rng, 2 * d, d),
                "b_h": zeros(d),
                "w_c": glorot(rng, 2 * d, d),
                "b_c": zeros(d),
            }
            self.bridge.append(
                {
                    key: self.params.add(f"bridge.{layer}.{key}", value).tensor
                    for key, value in initial.items()
                }
            )

        self.decoder: list[LstmCellParams] = [
            init_lstm_cell(
                self.params, f"dec.{layer}", rng, 3 * d if layer == 0 else d, d
            )
            for layer in range(config.layers)
        ]

        self.attention: AttentionParams = init_attention(
            self.params, "att", rng, d, 2 * d, d
        )

        self.out_w = self.params.add(
            "out.w", glorot(rng, 3 * d, config.tgt_vocab_size)
        ).tensor
        self.out_b = self.params.add("out.b", zeros(config.tgt_vocab_size)).tensor

    def parameters(self) -> list[Parameter]:
        return self.params.parameters()

    def state(self) -> dict[str, Array]:
        return self.params.state()

    def load_state(self, state: Mapping[str, Array]) -> None:
        self.params.load_state(state)


def _pad(batch: Sequence[Sequence[int]]) -> tuple[Array, Array, list[int]]:
    lengths = [len(ids) for ids in batch]
    width = max(lengths)
    ids = np.full((len(batch), width), PAD, dtype=np.int64)
    mask = np.zeros((len(batch), width), dtype=default_dtype())
    for row, sentence in enumerate(batch):
        ids[row, : len(sentence)] = sentence
        mask[row, : len(sentence)] = 1.0

    return ids, mask, lengths


def _run_direction(
    inputs: Sequence[Tensor],
    mask: Array,
    cell: LstmCellParams,
    reverse: bool,
) -> tuple[list[Tensor], list[Tensor]]:
    batch = mask.shape[0]
    d = cell.hidden_size
    h = Tensor(np.zeros((batch, d)))
    c = Tensor(np.zeros((batch, d)))
    hs: list[Tensor] = [h] * len(inputs)
    cs: list[Tensor] = [c] * len(inputs)

    positions = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    for t in positions:
        h_next, c_next = lstm_cell_step(inputs[t], h, c, cell)
        # padded positions carry the previous state through unchanged
        keep = mask[:, t : t + 1]
        if keep.all():
            h, c = h_next, c_next
        else:
            h = h_next * keep + h * (1.0 - keep)
            c = c_next * keep + c * (1.0 - keep)
        hs[t], cs[t] = h, c

    return hs, cs


def encode_batch(
    model: NmtModel,
    batch: Sequence[Sequence[int]],
    rng: Optional[np.random.Generator] = None,
) -> EncodedBatch:
    """
    Runs the stacked bidirectional encoder over a padded batch.

    Note:
        Layer ℓ > 1 reads the per-position [forward ; backward] output of layer
        ℓ − 1. Dropout applies between layers only when `rng` is given.
    """

    if not batch or any(len(ids) == 0 for ids in batch):
        raise InputError("cannot encode an empty sentence")

    ids, mask, lengths = _pad(batch)
    embedded = embedding(model.src_embed, ids)
    inputs = [embedded[:, t, :] for t in range(ids.shape[1])]

    finals = []
    layer_states = []
    for layer, cells in enumerate(model.encoder):
        if rng is not None:
            inputs = [dropout(x, model.config.dropout, rng) for x in inputs]
        fwd_h, fwd_c = _run_direction(inputs, mask, cells["fwd"], reverse=False)
        bwd_h, bwd_c = _run_direction(inputs, mask, cells["bwd"], reverse=True)
        finals.append((fwd_h[-1], bwd_h[0], fwd_c[-1], bwd_c[0]))
        layer_states.append((fwd_h, bwd_h, fwd_c, bwd_c))
        inputs = [concat([f, b], axis=-1) for f, b in zip(fwd_h, bwd_h)]

    memory = stack(inputs, axis=1)

    return EncodedBatch(
        memory=memory,
        keys=attention_keys(memory, model.attention),
        mask=mask,
        lengths=lengths,
        finals=finals,
        layer_states=layer_states,
    )


def encoder_outputs(encoded: EncodedBatch) -> list[EncoderOutput]:
    """Splits a batch into per-sentence numpy records, trimming padding."""

    outputs = []
    for row, length in enumerate(encoded.lengths):
        states = []
        cells = []
        for fwd_h, bwd_h, fwd_c, bwd_c in encoded.layer_states:
            states.append(
                [
                    np.stack([h.data[row] for h in fwd_h[:length]]),
                    np.stack([h.data[row] for h in bwd_h[:length]]),
                ]
            )
            cells.append(
                [
                    np.stack([c.data[row] for c in fwd_c[:length]]),
                    np.stack([c.data[row] for c in bwd_c[:length]]),
                ]
            )
        outputs.append(EncoderOutput(states, cells, length))

    return outputs


def _pad_rows(values: Array, width: int, carry: bool) -> Array:
    fill = values[-1:] if carry else np.zeros_like(values[:1])

    return np.concatenate([values, np.repeat(fill, width - len(values), axis=0)])


def batch_from_outputs(
    model: NmtModel, outputs: Sequence[EncoderOutput]
) -> EncodedBatch:
    """
    Rebuilds a padded batch from per-sentence records, the inverse of
    `encoder_outputs`.

    Note:
        The rebuilt tensors are constants, so no gradient reaches the encoder.
    """

    if not outputs:
        raise InputError("no encoder outputs to batch")

    lengths = [output.sentence_length for output in outputs]
    width = max(lengths)
    mask = np.zeros((len(outputs), width), dtype=default_dtype())
    for row, length in enumerate(lengths):
        mask[row, :length] = 1.0

    finals = []
    layer_states = []
    top: list[Array] = []
    for layer in range(model.config.layers):
        # forward states carry through padding, backward ones start from zeros
        arrays = [
            np.stack([_pad_rows(source[layer][k], width, k == 0) for source in rows])
            for rows, k in (
                ([o.states for o in outputs], 0),
                ([o.states for o in outputs], 1),
                ([o.cells for o in outputs], 0),
                ([o.cells for o in outputs], 1),
            )
        ]
        fwd_h, bwd_h, fwd_c, bwd_c = (
            [Tensor(array[:, t]) for t in range(width)] for array in arrays
        )
        finals.append((fwd_h[-1], bwd_h[0], fwd_c[-1], bwd_c[0]))
        layer_states.append((fwd_h, bwd_h, fwd_c, bwd_c))
        top = arrays[:2]

    memory = Tensor(np.concatenate(top, axis=-1))

    return EncodedBatch(
        memory=memory,
        keys=attention_keys(memory, model.attention),
        mask=mask,
        lengths=lengths,
        finals=finals,
        layer_states=layer_states,
    )


def bilstm_encode(indices: Sequence[int], model: NmtModel) -> EncoderOutput:
    """
    Encodes one sentence.

    Note:
        The forward direction reads positions 1..n and the backward one n..1.

    Args:
        indices: Source token ids.
        model: The translation model.

    Returns:
        Every layer's states for the sentence.
    """

    if len(indices) == 0:
        raise InputError("cannot encode an empty sentence")

    with no_grad():
        return encoder_outputs(encode_batch(model, [list(indices)]))[0]


def initial_state(
    model: NmtModel, encoded: Union[EncodedBatch, EncoderOutput]
) -> DecoderState:
    """Learned bridge from each encoder layer's final states to the decoder layer."""

    if isinstance(encoded, EncoderOutput):
        encoded = batch_from_outputs(model, [encoded])

    hidden = []
    cells = []
    for bridge, (h_fwd, h_bwd, c_fwd, c_bwd) in zip(model.bridge, encoded.finals):
        final_h = concat([h_fwd, h_bwd], axis=-1)
        final_c = concat([c_fwd, c_bwd], axis=-1)
        hidden.append(tanh(final_h @ bridge["w_h"] + bridge["b_h"]))
        cells.append(final_c @ bridge["w_c"] + bridge["b_c"])

    batch = encoded.mask.shape[0]
    feed = Tensor(np.zeros((batch, 2 * model.config.d)))

    return DecoderState(hidden=hidden, cells=cells, feed=feed)


def decode_step(
    prev_tokens: Sequence[int],
    state: DecoderState,
    encoded: Union[EncodedBatch, EncoderOutput],
    model: NmtModel,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, DecoderState]:
    """
    One decoder step with input feeding.

    Note:
        The previous attention context is concatenated to the embedded token as
        the first decoder layer's input. The top decoder state attends over the
        encoder memory, and [state ; context] is projected to vocabulary logits.

    Args:
        prev_tokens: One target id per batch row.
        state: Decoder state from `initial_state` or the previous step.
        encoded: The encoder results being attended over. A single sentence's
            `EncoderOutput` is batched with `batch_from_outputs` first.
        model: The translation model.
        rng: Enables dropout when given.

    Returns:
        Logits of shape (batch, tgt_vocab_size), and the new state with its
        attention weights.

    Errors:
        LabelError when a token id is outside the target vocabulary.
    """

    if isinstance(encoded, EncoderOutput):
        encoded = batch_from_outputs(model, [encoded])

    x = embedding(model.tgt_embed, prev_tokens)
    if rng is not None:
        x = dropout(x, model.config.dropout, rng)
    x = concat([x, state.feed], axis=-1)

    hidden = []
    cells = []
    for layer, cell in enumerate(model.decoder):
        h, c = lstm_cell_step(x, state.hidden[layer], state.cells[layer], cell)
        hidden.append(h)
        cells.append(c)
        x = dropout(h, model.config.dropout, rng) if rng is not None else h

    context, weights = attention(
        x, encoded.memory, model.attention, encoded.mask, encoded.keys
    )
    logits = concat([x, context], axis=-1) @ model.out_w + model.out_b

    return logits, DecoderState(hidden, cells, context, weights)


def sequence_loss(
    model: NmtModel,
    pairs: Sequence[EncodedPair],
    rng: Optional[np.random.Generator] = None,
    reduction: str = "mean",
) -> tuple[Tensor, int]:
    """
    Teacher-forced cross-entropy over target tokens plus EOS, PAD excluded.

    Args:
        model: The translation model.
        pairs: Source and target ids without boundaries.
        rng: Enables dropout when given.
        reduction: "mean" per token, or "sum".

    Returns:
        The loss and the number of scored tokens.
    """

    encoded = encode_batch(model, [src for src, _ in pairs], rng)
    state = initial_state(model, encoded)

    inputs, _, _ = _pad([[BOS] + tgt for _, tgt in pairs])
    gold, mask, lengths = _pad([tgt + [EOS] for _, tgt in pairs])

    total: Optional[Tensor] = None
    for t in range(gold.shape[1]):
        logits, state = decode_step(inputs[:, t], state, encoded, model, rng)
        step_loss = cross_entropy(logits, gold[:, t], mask[:, t], reduction="sum")
        total = step_loss if total is None else total + step_loss

    tokens = sum(lengths)
    assert total is not None
    if reduction == "mean":
        total = total * (1.0 / tokens)

    return total, tokens


def perplexity(
    model: NmtModel,
    data: Sequence[EncodedPair],
    batch_size: int = NMT_BATCH_SIZE,
) -> float:
    """
    exp(mean per-token cross-entropy), EOS included and PAD excluded.
    """

    if not data:
        raise InputError("perplexity needs at least one pair")

    nll = 0.0
    tokens = 0
    with no_grad():
        for start in range(0, len(data), batch_size):
            loss, count = sequence_loss(
                model, data[start : start + batch_size], reduction="sum"
            )
            nll += loss.item()
            tokens += count

    return math.exp(nll / tokens)


def greedy_decode(
    model: NmtModel,
    src: Sequence[int],
    max_len: Optional[int] = None,
) -> list[int]:
    """
    Picks the most probable token at each step until EOS or `max_len` tokens.
    """

    limit = max_len if max_len is not None else 2 * len(src) + 10
    output: list[int] = []

    with no_grad():
        encoded = encode_batch(model, [list(src)])
        state = initial_state(model, encoded)
        token = BOS
        for _ in range(limit):
            logits, state = decode_step([token], state, encoded, model)
            token = int(np.argmax(logits.data[0]))
            if token == EOS:
                break
            output.append(token)

    return output


def token_accuracy(model: NmtModel, data: Sequence[EncodedPair]) -> float:
    """
    Share of gold target tokens reproduced at the same position by greedy decoding.
    """

    correct = 0
    total = 0
    for src, tgt in data:
        predicted = greedy_decode(model, src, max_len=len(tgt) + 1)
        correct += sum(1 for gold, guess in zip(tgt, predicted) if gold == guess)
        total += len(tgt)

    return correct / total if total else 0.0

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nmtprobe.constants import BOS, EOS
from nmtprobe.errors import InputError, LabelError, ValidationError
from nmtprobe.numerics.tensor import Tensor, cross_entropy, no_grad
from nmtprobe.seq2seq.lstm import lstm_cell_step
from nmtprobe.seq2seq.model import (
    NmtConfig,
    NmtModel,
    batch_from_outputs,
    bilstm_encode,
    decode_step,
    encode_batch,
    encoder_outputs,
    greedy_decode,
    initial_state,
    perplexity,
    sequence_loss,
)


def test_nmt_config_validation() -> None:
    bad = [
        {"d": 0},
        {"layers": 0},
        {"src_vocab_size": 4},
        {"optimizer": "rmsprop"},
        {"lr_decay": 0.0},
        {"dropout": 1.0},
    ]

    for overrides in bad:
        settings: dict[str, object] = {"src_vocab_size": 12, "tgt_vocab_size": 12}
        settings.update(overrides)
        with pytest.raises(ValidationError):
            NmtConfig(**settings)  # type: ignore[arg-type]


def test_nmt_config_record() -> None:
    config = NmtConfig(20, 30, d=8, layers=2, optimizer="adam", dropout=0.2)

    assert NmtConfig.from_record(config.to_record()) == config


def test_bilstm_encode_shapes(toy_model: NmtModel) -> None:
    output = bilstm_encode([4, 5, 6], toy_model)

    assert output.sentence_length == 3
    assert len(output.states) == 2
    for layer in output.states + output.cells:
        assert [direction.shape for direction in layer] == [(3, 4), (3, 4)]
    assert output.top_states().shape == (3, 8)


def test_bilstm_encode_matches_unrolled_cells(toy_model: NmtModel) -> None:
    ids = [4, 5, 6]
    output = bilstm_encode(ids, toy_model)

    with no_grad():
        inputs = [toy_model.src_embed[i] for i in ids]
        for layer, cells in enumerate(toy_model.encoder):
            directions = []
            for name, order in (("fwd", [0, 1, 2]), ("bwd", [2, 1, 0])):
                h = c = Tensor(np.zeros(4))
                states: dict[int, Tensor] = {}
                for t in order:
                    h, c = lstm_cell_step(inputs[t], h, c, cells[name])
                    states[t] = h
                directions.append([states[t] for t in range(3)])

            for direction, expected in zip(output.states[layer], directions):
                assert_allclose(
                    direction, np.stack([h.data for h in expected]), atol=1e-6
                )

            inputs = [
                Tensor(np.concatenate([f.data, b.data])) for f, b in zip(*directions)
            ]


def test_encode_batch_matches_single_sentences(toy_model: NmtModel) -> None:
    sentences = [[4, 5, 6, 7], [8, 9], [10]]

    with no_grad():
        encoded = encode_batch(toy_model, sentences)

    for row, ids in enumerate(sentences):
        single = bilstm_encode(ids, toy_model)
        assert_allclose(
            encoded.memory.data[row, : len(ids)], single.top_states(), atol=1e-5
        )


def test_encode_empty_sentence(toy_model: NmtModel) -> None:
    with pytest.raises(InputError):
        bilstm_encode([], toy_model)


def test_tied_directions_share_weights() -> None:
    rng = np.random.default_rng(0)
    tied = NmtModel(NmtConfig(12, 12, d=4, layers=2, tie_directions=True), rng)
    untied = NmtModel(NmtConfig(12, 12, d=4, layers=2), rng)

    assert tied.encoder[0]["fwd"] is tied.encoder[0]["bwd"]
    assert len(untied.parameters()) - len(tied.parameters()) == 2 * 3


def test_decode_step(toy_model: NmtModel) -> None:
    with no_grad():
        encoded = encode_batch(toy_model, [[4, 5, 6], [7, 8]])
        state = initial_state(toy_model, encoded)
        logits, state = decode_step([BOS, BOS], state, encoded, toy_model)

    assert logits.shape == (2, 12)
    assert state.attention is not None
    assert_allclose(state.attention.data.sum(axis=1), [1.0, 1.0], atol=1e-6)
    assert state.attention.data[1, 2] == 0.0

    with pytest.raises(LabelError):
        decode_step([BOS, 99], state, encoded, toy_model)


def test_decode_step_accepts_encoder_outputs(toy_model: NmtModel) -> None:
    sentences = [[4, 5, 6], [7, 8]]

    with no_grad():
        encoded = encode_batch(toy_model, sentences)
        rebuilt = batch_from_outputs(toy_model, encoder_outputs(encoded))
        batched, _ = decode_step(
            [BOS, BOS], initial_state(toy_model, encoded), encoded, toy_model
        )
        from_records, _ = decode_step(
            [BOS, BOS], initial_state(toy_model, rebuilt), rebuilt, toy_model
        )

        single = bilstm_encode(sentences[1], toy_model)
        alone, _ = decode_step(
            [BOS], initial_state(toy_model, single), single, toy_model
        )

    assert_allclose(from_records.data, batched.data, atol=1e-5)
    assert_allclose(alone.data[0], batched.data[1], atol=1e-5)

    with pytest.raises(InputError):
        batch_from_outputs(toy_model, [])


def test_sequence_loss_sums_steps(toy_model: NmtModel) -> None:
    src, tgt = [4, 5, 6], [7, 8, 9]

    with no_grad():
        loss, tokens = sequence_loss(toy_model, [(src, tgt)], reduction="sum")

        encoded = encode_batch(toy_model, [src])
        state = initial_state(toy_model, encoded)
        expected = 0.0
        for prev, gold in zip([BOS] + tgt, tgt + [EOS]):
            logits, state = decode_step([prev], state, encoded, toy_model)
            expected += cross_entropy(logits, [gold], reduction="sum").item()

    assert tokens == 4
    assert loss.item() == pytest.approx(expected, rel=1e-5)


def test_perplexity_of_uniform_model(toy_model: NmtModel) -> None:
    toy_model.out_w.data = np.zeros_like(toy_model.out_w.data)
    toy_model.out_b.data = np.zeros_like(toy_model.out_b.data)

    assert perplexity(toy_model, [([4, 5], [6, 7, 8])]) == pytest.approx(12.0, rel=1e-5)

    with pytest.raises(InputError):
        perplexity(toy_model, [])


def test_perplexity_matches_direct_formula(toy_model: NmtModel) -> None:
    data = [([4, 5], [6, 7]), ([8], [9, 10, 11])]

    with no_grad():
        nll = sum(
            sequence_loss(toy_model, [pair], reduction="sum")[0].item()
            for pair in data
        )

    assert perplexity(toy_model, data, batch_size=2) == pytest.approx(
        math.exp(nll / 7), rel=1e-5
    )


def test_greedy_decode_respects_limit(toy_model: NmtModel) -> None:
    output = greedy_decode(toy_model, [4, 5, 6], max_len=2)

    assert len(output) <= 2
    assert EOS not in output

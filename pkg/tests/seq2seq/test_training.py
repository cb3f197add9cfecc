from typing import Optional

import numpy as np
import pytest

from nmtprobe.corpora import ParallelExample, build_vocab
from nmtprobe.errors import InputError, TrainingError
from nmtprobe.numerics.tensor import Tensor
from nmtprobe.seq2seq import training
from nmtprobe.seq2seq.model import (
    EncodedPair,
    NmtConfig,
    NmtModel,
    sequence_loss,
    token_accuracy,
)
from nmtprobe.seq2seq.training import encode_pairs, make_batches, train_nmt


def _copy_pairs(
    count: int, vocab_size: int, seed: int, low: int = 3, high: int = 8
) -> list[ParallelExample]:
    rng = np.random.default_rng(seed)
    words = [f"t{i}" for i in range(vocab_size - 4)]
    pairs = []
    for _ in range(count):
        length = rng.integers(low, high)
        sentence = [words[i] for i in rng.integers(0, len(words), length)]
        pairs.append(ParallelExample(sentence, list(sentence)))

    return pairs


def test_make_batches_covers_every_pair() -> None:
    pairs = [([4] * n, [5]) for n in (5, 1, 3, 2, 4, 6, 1)]
    batches = make_batches(pairs, 3, np.random.default_rng(0))

    assert sorted(i for batch in batches for i in batch) == list(range(7))
    assert [len(batch) for batch in batches].count(1) == 1


def test_train_nmt_needs_data() -> None:
    pairs = _copy_pairs(4, 10, 0)
    vocab = build_vocab(p.source_tokens for p in pairs)
    config = NmtConfig(len(vocab), len(vocab), d=4, layers=1)

    with pytest.raises(InputError):
        train_nmt(pairs, [], config, 0, vocab, vocab)


def test_frozen_training_stops_after_patience() -> None:
    pairs = _copy_pairs(12, 10, 0)
    vocab = build_vocab(p.source_tokens for p in pairs)
    config = NmtConfig(
        len(vocab),
        len(vocab),
        d=4,
        layers=1,
        learning_rate=0.0,
        batch_size=4,
        eval_every=1,
        patience=3,
        max_steps=100,
    )

    checkpoint = train_nmt(pairs, pairs[:4], config, 0, vocab, vocab)

    assert checkpoint.log.stopped_early
    assert len(checkpoint.log.evaluations) == 4
    assert [e.improved for e in checkpoint.log.evaluations] == [True] + [False] * 3
    assert checkpoint.step == 1


def test_train_nmt_is_deterministic() -> None:
    pairs = _copy_pairs(16, 10, 1)
    vocab = build_vocab(p.source_tokens for p in pairs)
    config = NmtConfig(
        len(vocab), len(vocab), d=4, layers=1, batch_size=4, eval_every=2, max_steps=6
    )

    first = train_nmt(pairs, pairs[:4], config, 3, vocab, vocab)
    second = train_nmt(pairs, pairs[:4], config, 3, vocab, vocab)

    assert first.log.losses == second.log.losses
    for name, values in first.params.items():
        assert np.array_equal(values, second.params[name])


def test_training_lowers_dev_perplexity() -> None:
    pairs = _copy_pairs(40, 10, 2)
    vocab = build_vocab(p.source_tokens for p in pairs)
    config = NmtConfig(
        len(vocab),
        len(vocab),
        d=8,
        layers=1,
        optimizer="adam",
        learning_rate=0.02,
        batch_size=8,
        eval_every=10,
        max_steps=60,
    )

    checkpoint = train_nmt(pairs, pairs[:8], config, 0, vocab, vocab)
    evaluations = checkpoint.log.evaluations

    assert checkpoint.dev_metric < evaluations[0].dev_perplexity
    assert checkpoint.dev_metric == min(e.dev_perplexity for e in evaluations)


@pytest.mark.slow
def test_copy_task_is_learned() -> None:
    train = _copy_pairs(1000, 30, 0)
    held_out = _copy_pairs(50, 30, 1)
    vocab = build_vocab(p.source_tokens for p in train)
    config = NmtConfig(
        len(vocab),
        len(vocab),
        d=16,
        layers=2,
        optimizer="adam",
        learning_rate=0.01,
        batch_size=32,
        eval_every=100,
        patience=5,
        max_steps=3000,
    )

    checkpoint = train_nmt(train, held_out[:20], config, 0, vocab, vocab)
    model = checkpoint.model()

    losses = checkpoint.log.losses
    averages = [np.mean(losses[i : i + 100]) for i in range(0, 1000, 100)]
    assert averages[-1] < averages[0]

    test = encode_pairs(held_out[20:], vocab, vocab)
    assert token_accuracy(model, test) >= 0.95


def test_divergence_names_the_step(monkeypatch: pytest.MonkeyPatch) -> None:
    pairs = _copy_pairs(16, 10, 0)
    vocab = build_vocab(p.source_tokens for p in pairs)
    config = NmtConfig(len(vocab), len(vocab), d=4, layers=1, batch_size=4)
    calls: list[int] = []

    def poisoned_loss(
        model: NmtModel,
        batch: list[EncodedPair],
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, int]:
        calls.append(len(batch))
        if len(calls) == 3:
            for param in model.parameters():
                param.tensor.data[...] = np.nan
        return sequence_loss(model, batch, rng)

    monkeypatch.setattr(training, "sequence_loss", poisoned_loss)

    with pytest.raises(TrainingError, match="at step 3"):
        train_nmt(pairs, pairs[:4], config, 0, vocab, vocab)

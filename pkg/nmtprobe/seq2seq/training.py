import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from nmtprobe.corpora import ParallelExample, Vocabulary, encode
from nmtprobe.errors import InputError, TrainingError
from nmtprobe.numerics import optim
from nmtprobe.numerics.params import clip_grad_norm, zero_grad
from nmtprobe.numerics.tensor import Array, backward
from nmtprobe.seq2seq.model import (
    EncodedPair,
    NmtConfig,
    NmtModel,
    perplexity,
    sequence_loss,
)

logger = logging.getLogger(__name__)


@dataclass
class Evaluation:
    step: int
    dev_perplexity: float
    learning_rate: float
    improved: bool


@dataclass
class TrainingLog:
    losses: list[float] = field(default_factory=list)
    evaluations: list[Evaluation] = field(default_factory=list)
    stopped_early: bool = False


@dataclass
class Checkpoint:
    """
    The best-dev parameters of a training run, with everything needed to reuse them.
    """

    params: dict[str, Array]
    config: NmtConfig
    dev_metric: float
    step: int
    seed: int
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    log: TrainingLog = field(default_factory=TrainingLog)

    def model(self) -> NmtModel:
        model = NmtModel(self.config, np.random.default_rng(self.seed))
        model.load_state(self.params)
        return model


def encode_pairs(
    examples: Sequence[ParallelExample],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
) -> list[EncodedPair]:
    return [
        (encode(ex.source_tokens, src_vocab), encode(ex.target_tokens, tgt_vocab))
        for ex in examples
    ]


def make_batches(
    pairs: Sequence[EncodedPair],
    batch_size: int,
    rng: np.random.Generator,
) -> list[list[int]]:
    """
    Groups pair indices into batches of similar source length, in shuffled order.
    """

    order = rng.permutation(len(pairs))
    by_length = sorted(order.tolist(), key=lambda i: len(pairs[i][0]))
    batches = [
        by_length[start : start + batch_size]
        for start in range(0, len(by_length), batch_size)
    ]

    return [batches[i] for i in rng.permutation(len(batches))]


def train_nmt(
    train: Sequence[ParallelExample],
    dev: Sequence[ParallelExample],
    config: NmtConfig,
    seed: int,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
) -> Checkpoint:
    """
    Mini-batch teacher-forced training with dev-perplexity checkpoint selection.

    Note:
        Every `eval_every` steps the dev perplexity is computed. A strictly lower
        value becomes the new best checkpoint; otherwise the patience counter grows
        and, with SGD, the learning rate is multiplied by `lr_decay`. Training stops
        after `patience` evaluations in a row without improvement, or at `max_steps`.

    Args:
        train: Training pairs, already length-filtered.
        dev: Development pairs.
        config: Model and optimizer settings.
        seed: The only source of randomness (initialization, batching, dropout).
        src_vocab: Source vocabulary.
        tgt_vocab: Target vocabulary.

    Returns:
        The best-dev checkpoint.

    Errors:
        TrainingError naming the step at which the loss stopped being finite.
    """

    if not train or not dev:
        raise InputError("training needs non-empty train and dev splits")

    rng = np.random.default_rng(seed)
    model = NmtModel(config, rng)
    params = model.parameters()
    state = optim.OptimizerState(config.optimizer, config.learning_rate)
    train_pairs = encode_pairs(train, src_vocab, tgt_vocab)
    dev_pairs = encode_pairs(dev, src_vocab, tgt_vocab)
    dropout_rng = rng if config.dropout > 0 else None

    log = TrainingLog()
    best: Optional[dict[str, Array]] = None
    best_metric = math.inf
    best_step = 0
    stale = 0
    step = 0

    def evaluate() -> bool:
        nonlocal best, best_metric, best_step, stale

        metric = perplexity(model, dev_pairs, config.batch_size)
        improved = metric < best_metric
        if improved:
            best, best_metric, best_step, stale = model.state(), metric, step, 0
        else:
            stale += 1
            if config.optimizer == "sgd":
                state.learning_rate *= config.lr_decay

        log.evaluations.append(Evaluation(step, metric, state.learning_rate, improved))
        logger.info(
            "step %d: dev perplexity %.4f, lr %.4g, stale %d/%d",
            step,
            metric,
            state.learning_rate,
            stale,
            config.patience,
        )

        return stale >= config.patience

    logger.info(
        "training on %d pairs, %d parameter tensors", len(train_pairs), len(params)
    )
    done = False
    while not done and step < config.max_steps:
        for batch in make_batches(train_pairs, config.batch_size, rng):
            step += 1
            zero_grad(params)
            loss, _ = sequence_loss(model, [train_pairs[i] for i in batch], dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"loss diverged to {value} at step {step}")

            backward(loss)
            clip_grad_norm(params, config.clip_norm)
            optim.step(state, params)
            log.losses.append(value)

            if step % config.eval_every == 0 and evaluate():
                log.stopped_early = True
                done = True
                break
            if step >= config.max_steps:
                break

    if best is None or (not log.stopped_early and step % config.eval_every != 0):
        evaluate()

    assert best is not None
    logger.info("best dev perplexity %.4f at step %d", best_metric, best_step)

    return Checkpoint(
        params=best,
        config=config,
        dev_metric=best_metric,
        step=best_step,
        seed=seed,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        log=log,
    )

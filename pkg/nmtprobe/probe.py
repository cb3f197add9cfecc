"""
NLI classifiers over frozen pair features: a linear softmax model or a ReLU MLP.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Optional, Sequence, Union

import numpy as np

from nmtprobe.constants import (
    PROBE_BATCH_SIZE,
    PROBE_HIDDEN_SIZE,
    PROBE_LEARNING_RATE,
    PROBE_MAX_EPOCHS,
    PROBE_PATIENCE,
)
from nmtprobe.corpora import SCHEME_KINDS, LabelScheme, label_scheme
from nmtprobe.errors import ArtifactIOError, ShapeError, ValidationError
from nmtprobe.numerics import optim
from nmtprobe.numerics.container import decode_parameters, encode_parameters
from nmtprobe.numerics.params import (
    Parameter,
    ParameterStore,
    glorot,
    zero_grad,
    zeros,
)
from nmtprobe.numerics.tensor import (
    Array,
    Tensor,
    backward,
    cross_entropy,
    no_grad,
    precision,
    relu,
    softmax,
)
from nmtprobe.records import (
    dataclass_record,
    from_dataclass_record,
    read_record,
    write_record,
)

logger = logging.getLogger(__name__)

PROBE_KINDS = Literal["linear", "mlp"]
PathLike = Union[str, Path]


@dataclass(frozen=True)
class ProbeConfig:
    kind: PROBE_KINDS = "linear"
    hidden_size: int = PROBE_HIDDEN_SIZE
    depth: int = 1
    scheme: SCHEME_KINDS = "two_way"
    learning_rate: float = PROBE_LEARNING_RATE
    batch_size: int = PROBE_BATCH_SIZE
    max_epochs: int = PROBE_MAX_EPOCHS
    patience: int = PROBE_PATIENCE
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "mlp"):
            raise ValidationError(f"unknown probe kind {self.kind!r}")
        if self.kind == "mlp" and (self.hidden_size < 1 or self.depth < 1):
            raise ValidationError(
                f"an mlp probe needs hidden_size ≥ 1 and depth ≥ 1, got "
                f"hidden_size={self.hidden_size}, depth={self.depth}"
            )
        label_scheme(self.scheme)
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValidationError("learning_rate and weight_decay must be ≥ 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, max_epochs and patience must be ≥ 1")

    @property
    def label_scheme(self) -> LabelScheme:
        return label_scheme(self.scheme)

    def to_record(self) -> dict[str, str]:
        return dataclass_record(self)

    @classmethod
    def from_record(cls, record: Mapping[str, str]) -> "ProbeConfig":
        return from_dataclass_record(cls, record)


class ProbeModel:
    """
    A classifier whose output layer has one unit per label of its scheme.

    Note:
        The linear kind ignores `hidden_size` and `depth`. The mlp kind stacks
        `depth` ReLU layers of width `hidden_size` before the output layer.

    Args:
        config: Probe settings, including the seed for initialization.
        input_dim: Width of the pair features.
    """

    def __init__(self, config: ProbeConfig, input_dim: int) -> None:
        if input_dim < 1:
            raise ShapeError(f"probe input dimension must be ≥ 1, got {input_dim}")

        self.config = config
        self.input_dim = input_dim
        self.label_scheme = config.label_scheme
        self.params = ParameterStore()

        rng = np.random.default_rng(config.seed)
        self.layers: list[tuple[Tensor, Tensor]] = []
        width = input_dim
        if config.kind == "mlp":
            for layer in range(config.depth):
                w = self.params.add(
                    f"hidden.{layer}.w", glorot(rng, width, config.hidden_size)
                )
                b = self.params.add(f"hidden.{layer}.b", zeros(config.hidden_size))
                self.layers.append((w.tensor, b.tensor))
                width = config.hidden_size

        labels = len(self.label_scheme)
        self.out_w = self.params.add("out.w", glorot(rng, width, labels)).tensor
        self.out_b = self.params.add("out.b", zeros(labels)).tensor

    def parameters(self) -> list[Parameter]:
        return self.params.parameters()

    def state(self) -> dict[str, Array]:
        return self.params.state()

    def load_state(self, state: Mapping[str, Array]) -> None:
        self.params.load_state(state)

    def logits(self, features: Tensor) -> Tensor:
        if features.shape[-1] != self.input_dim:
            raise ShapeError(
                f"probe expects features of dimension {self.input_dim}, "
                f"got shape {features.shape}"
            )

        x = features
        for w, b in self.layers:
            x = relu(x @ w + b)

        return x @ self.out_w + self.out_b


@dataclass
class ProbeLog:
    """Mean training loss and dev accuracy per epoch."""

    losses: list[float] = field(default_factory=list)
    dev_accuracies: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def _label_ids(labels: Sequence[str], scheme: LabelScheme) -> Array:
    return np.array([scheme.index(label) for label in labels], dtype=np.int64)


def _check_features(features: Array, labels: Sequence[str], split: str) -> None:
    if features.ndim != 2:
        raise ShapeError(
            f"{split} features must be a matrix, got shape {features.shape}"
        )
    if features.shape[0] != len(labels):
        raise ShapeError(
            f"{split} has {features.shape[0]} feature rows but {len(labels)} labels"
        )
    if features.shape[0] == 0:
        raise ShapeError(f"{split} has no examples")


def train_probe(
    train_features: Array,
    train_labels: Sequence[str],
    dev_features: Array,
    dev_labels: Sequence[str],
    config: ProbeConfig,
) -> tuple[ProbeModel, ProbeLog]:
    """
    Minimizes cross-entropy with Adam and keeps the best-dev-accuracy epoch.

    Note:
        Training stops after `patience` epochs in a row without a strictly better
        dev accuracy, or after `max_epochs`. The seed fixes initialization and
        the shuffling order, so two runs give identical parameters.

    Args:
        train_features: Pair features, shape (count, dim).
        train_labels: Gold label strings.
        dev_features: Development features of the same width.
        dev_labels: Development labels.
        config: Probe settings.

    Returns:
        The best-dev model and the per-epoch training log.

    Errors:
        LabelError for a label outside the scheme, ShapeError for mismatched widths.
    """

    _check_features(train_features, train_labels, "train")
    _check_features(dev_features, dev_labels, "dev")
    if train_features.shape[1] != dev_features.shape[1]:
        raise ShapeError(
            f"train features have dimension {train_features.shape[1]}, "
            f"dev features {dev_features.shape[1]}"
        )

    scheme = config.label_scheme
    train_gold = _label_ids(train_labels, scheme)
    dev_gold = _label_ids(dev_labels, scheme)

    model = ProbeModel(config, train_features.shape[1])
    params = model.parameters()
    state = optim.OptimizerState(
        "adam", config.learning_rate, weight_decay=config.weight_decay
    )
    rng = np.random.default_rng(config.seed + 1)

    log = ProbeLog()
    best = model.state()
    best_accuracy = -1.0
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train_features.shape[0])
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            zero_grad(params)
            loss = cross_entropy(
                model.logits(Tensor(train_features[batch])), train_gold[batch]
            )
            backward(loss)
            optim.step(state, params)
            total += loss.item() * len(batch)

        predicted = _predict_ids(model, dev_features)
        dev_accuracy = float(np.mean(predicted == dev_gold))
        log.losses.append(total / len(order))
        log.dev_accuracies.append(dev_accuracy)
        logger.debug(
            "epoch %d: loss %.4f, dev accuracy %.4f",
            epoch,
            log.losses[-1],
            dev_accuracy,
        )

        if dev_accuracy > best_accuracy:
            best, best_accuracy, stale = model.state(), dev_accuracy, 0
            log.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                log.stopped_early = True
                logger.info(
                    "probe stopped at epoch %d, best dev accuracy %.4f at epoch %d",
                    epoch,
                    best_accuracy,
                    log.best_epoch,
                )
                break

    model.load_state(best)

    return model, log


def _probabilities(model: ProbeModel, features: Array) -> Array:
    with no_grad(), precision("float64"):
        return softmax(model.logits(Tensor(features)), axis=-1).data


def _predict_ids(model: ProbeModel, features: Array) -> Array:
    # argmax returns the first maximum, so ties go to the lowest label index
    return np.argmax(_probabilities(model, features), axis=-1)


def predict(model: ProbeModel, feature: Array) -> Array:
    """
    Probability of each label of the model's scheme, in scheme order.

    Examples:
        A linear model with all-zero weights gives the uniform distribution.
    """

    vector = np.asarray(feature)
    if vector.ndim != 1:
        raise ShapeError(f"predict takes one feature vector, got shape {vector.shape}")

    return _probabilities(model, vector.reshape(1, -1))[0]


def predict_batch(model: ProbeModel, features: Array) -> list[str]:
    """Predicted label per row, in input order."""

    matrix = np.asarray(features)
    if matrix.ndim != 2:
        raise ShapeError(f"predict_batch takes a matrix, got shape {matrix.shape}")
    if matrix.shape[0] == 0:
        return []

    labels = model.label_scheme.labels

    return [labels[i] for i in _predict_ids(model, matrix)]


def save_probe(
    model: ProbeModel,
    path: PathLike,
    provenance: Optional[Mapping[str, str]] = None,
) -> str:
    """
    Writes the parameters and a `[probe]` sidecar with the config and provenance.

    Args:
        model: The trained probe.
        path: Parameter container path; the sidecar is `path` + ".config".
        provenance: Extra keys such as the digests of the dumps it was trained on.

    Returns:
        The sha256 of the parameter container.
    """

    blob = encode_parameters(model.state())
    try:
        Path(path).write_bytes(blob)
    except OSError as error:
        raise ArtifactIOError(f"cannot write {path}: {error}") from error

    record: dict[str, object] = dict(model.config.to_record())
    record["input_dim"] = model.input_dim
    record.update(provenance or {})
    write_record(Path(f"{path}.config"), "probe", record)

    return hashlib.sha256(blob).hexdigest()


def load_probe(path: PathLike) -> tuple[ProbeModel, dict[str, str]]:
    """
    Returns:
        The probe and its full sidecar record, provenance included.
    """

    try:
        blob = Path(path).read_bytes()
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error

    record = read_record(Path(f"{path}.config"), "probe")
    config = ProbeConfig.from_record(record)
    model = ProbeModel(config, int(record["input_dim"]))
    model.load_state(decode_parameters(blob, str(path)))

    return model, record

from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from nmtprobe.corpora import ParallelExample, Vocabulary, build_vocab, encode
from nmtprobe.errors import LabelError, ShapeError, ValidationError
from nmtprobe.numerics.tensor import Array
from nmtprobe.probe import (
    ProbeConfig,
    ProbeModel,
    load_probe,
    predict,
    predict_batch,
    save_probe,
    train_probe,
)
from nmtprobe.representations import combine_matrix, extract_batch
from nmtprobe.seq2seq.model import NmtConfig, NmtModel
from nmtprobe.seq2seq.training import train_nmt


def _blobs(count: int, seed: int) -> tuple[Array, list[str]]:
    """Two well separated Gaussian blobs in 6 dimensions."""

    rng = np.random.default_rng(seed)
    labels = ["entailed" if i % 2 == 0 else "not_entailed" for i in range(count)]
    centers = np.where(np.arange(count) % 2 == 0, 3.0, -3.0)[:, None]
    features = rng.normal(size=(count, 6)) * 0.5 + centers

    return features, labels


def _xor(count: int, seed: int) -> tuple[Array, list[str]]:
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(count, 2))
    features = signs + rng.normal(size=(count, 2)) * 0.1
    labels = [
        "entailed" if a * b > 0 else "not_entailed" for a, b in signs.tolist()
    ]

    return features, labels


def test_probe_config_validation() -> None:
    bad = [
        {"kind": "svm"},
        {"kind": "mlp", "hidden_size": 0},
        {"scheme": "four_way"},
        {"learning_rate": -0.1},
        {"patience": 0},
    ]

    for settings in bad:
        with pytest.raises(ValidationError):
            ProbeConfig(**settings)  # type: ignore[arg-type]


def test_probe_config_record() -> None:
    config = ProbeConfig(kind="mlp", hidden_size=7, scheme="three_way", seed=4)

    assert ProbeConfig.from_record(config.to_record()) == config


def test_output_layer_follows_scheme() -> None:
    assertions = {
        "two_way": 2,
        "three_way": 3,
    }

    for scheme, labels in assertions.items():
        model = ProbeModel(ProbeConfig(scheme=scheme), 5)  # type: ignore[arg-type]
        assert model.out_w.shape == (5, labels)


def test_zero_weights_give_uniform_prediction() -> None:
    model = ProbeModel(ProbeConfig(scheme="three_way"), 4)
    model.out_w.data = np.zeros_like(model.out_w.data)

    assert_allclose(predict(model, np.ones(4)), [1 / 3] * 3)
    # ties go to the lowest label index
    assert predict_batch(model, np.ones((2, 4))) == ["entailment", "entailment"]


def test_separable_blobs_are_learned() -> None:
    train_x, train_y = _blobs(80, 0)
    dev_x, dev_y = _blobs(40, 1)
    config = ProbeConfig(learning_rate=0.05, batch_size=16, max_epochs=50)

    model, log = train_probe(train_x, train_y, dev_x, dev_y, config)

    assert max(log.dev_accuracies) == 1.0
    assert predict_batch(model, dev_x) == dev_y
    assert_allclose(predict(model, dev_x[0]).sum(), 1.0)


def test_mlp_beats_linear_on_xor() -> None:
    train_x, train_y = _xor(200, 0)
    dev_x, dev_y = _xor(100, 1)

    accuracy = {}
    for kind in ("linear", "mlp"):
        config = ProbeConfig(
            kind=kind,  # type: ignore[arg-type]
            hidden_size=16,
            learning_rate=0.05,
            batch_size=32,
            max_epochs=60,
            patience=10,
        )
        model, _ = train_probe(train_x, train_y, dev_x, dev_y, config)
        predictions = predict_batch(model, dev_x)
        accuracy[kind] = np.mean([p == g for p, g in zip(predictions, dev_y)])

    assert accuracy["mlp"] >= accuracy["linear"]
    assert accuracy["mlp"] > 0.9


def test_train_probe_is_deterministic() -> None:
    train_x, train_y = _blobs(40, 2)
    config = ProbeConfig(kind="mlp", hidden_size=8, max_epochs=5, seed=3)

    first, first_log = train_probe(train_x, train_y, train_x, train_y, config)
    second, second_log = train_probe(train_x, train_y, train_x, train_y, config)

    assert first_log.losses == second_log.losses
    for name, values in first.state().items():
        assert_array_equal(values, second.state()[name])


def test_early_stopping_keeps_best_epoch() -> None:
    train_x, train_y = _blobs(20, 3)
    config = ProbeConfig(learning_rate=0.0, max_epochs=20, patience=2)

    _, log = train_probe(train_x, train_y, train_x, train_y, config)

    assert log.stopped_early
    assert log.best_epoch == 1
    assert len(log.dev_accuracies) == 3


def test_train_probe_errors() -> None:
    train_x, train_y = _blobs(10, 0)
    config = ProbeConfig()

    with pytest.raises(LabelError):
        train_probe(train_x, ["neutral"] * 10, train_x, train_y, config)

    with pytest.raises(ShapeError):
        train_probe(train_x, train_y[:5], train_x, train_y, config)

    with pytest.raises(ShapeError):
        train_probe(train_x, train_y, train_x[:, :3], train_y, config)


def test_predict_batch_matches_predict() -> None:
    model = ProbeModel(ProbeConfig(kind="mlp", hidden_size=5, scheme="three_way"), 6)
    features = np.random.default_rng(0).normal(size=(100, 6))
    labels = model.label_scheme.labels

    expected = [labels[int(np.argmax(predict(model, row)))] for row in features]

    assert predict_batch(model, features) == expected
    assert predict_batch(model, np.zeros((0, 6))) == []

    with pytest.raises(ShapeError):
        predict(model, np.zeros(5))


def test_probe_round_trip(tmp_path: Path) -> None:
    model = ProbeModel(ProbeConfig(kind="mlp", hidden_size=3, seed=9), 4)
    path = tmp_path / "probe.sprb"

    digest = save_probe(model, path, {"encoder": "en-de"})
    loaded, record = load_probe(path)

    assert len(digest) == 64
    assert record["encoder"] == "en-de"
    assert record["input_dim"] == "4"
    assert loaded.config == model.config
    features = np.random.default_rng(1).normal(size=(5, 4))
    assert predict_batch(loaded, features) == predict_batch(model, features)


def _order_rows(count: int, seed: int) -> list[tuple[list[str], str]]:
    """
    Twelve-token contexts holding one "a" and one "b" away from both ends; the
    label says whether "a" comes first.
    """

    rng = np.random.default_rng(seed)
    fillers = [f"f{i}" for i in range(12)]
    rows = []
    for _ in range(count):
        context = [fillers[i] for i in rng.integers(0, len(fillers), 12)]
        first, second = rng.choice(np.arange(3, 9), 2, replace=False)
        context[first], context[second] = "a", "b"
        rows.append((context, "entailed" if first < second else "not_entailed"))

    return rows


def _order_features(
    model: NmtModel, rows: list[tuple[list[str], str]], vocab: Vocabulary
) -> tuple[Array, list[str]]:
    contexts = extract_batch(model, [encode(c, vocab) for c, _ in rows], "maxpool")
    hypothesis = encode(["a", "b"], vocab)
    hypotheses = extract_batch(model, [hypothesis] * len(rows), "maxpool")

    return combine_matrix(contexts, hypotheses, "concat"), [y for _, y in rows]


@pytest.mark.slow
def test_trained_encoder_beats_random_encoder() -> None:
    accuracies: dict[str, list[float]] = {"trained": [], "random": []}

    for seed in range(5):
        splits = [_order_rows(n, seed * 10 + i) for i, n in enumerate((400, 100, 200))]
        parallel = [
            [
                ParallelExample(c, ["before" if y == "entailed" else "after"])
                for c, y in rows
            ]
            for rows in splits[:2]
        ]
        src_vocab = build_vocab(p.source_tokens for p in parallel[0])
        tgt_vocab = build_vocab(p.target_tokens for p in parallel[0])
        config = NmtConfig(
            len(src_vocab),
            len(tgt_vocab),
            d=16,
            layers=1,
            optimizer="adam",
            learning_rate=0.01,
            batch_size=32,
            eval_every=50,
            patience=4,
            max_steps=800,
        )
        checkpoint = train_nmt(*parallel, config, seed, src_vocab, tgt_vocab)
        encoders = {
            "trained": checkpoint.model(),
            "random": NmtModel(config, np.random.default_rng(seed)),
        }

        for name, model in encoders.items():
            train, dev, test = (_order_features(model, r, src_vocab) for r in splits)
            settings = ProbeConfig(
                learning_rate=0.01, batch_size=32, patience=10, seed=seed
            )
            classifier, _ = train_probe(*train, *dev, settings)
            predictions = predict_batch(classifier, test[0])
            accuracies[name].append(
                float(np.mean([p == g for p, g in zip(predictions, test[1])]))
            )

    assert np.mean(accuracies["trained"]) - np.mean(accuracies["random"]) >= 0.10

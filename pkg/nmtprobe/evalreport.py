"""
Accuracy bookkeeping and report tables.

Every accuracy is kept as exact integer counts (correct, n) and only turned into a
percentage when rendered, to one decimal place.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import (
    Any,
    Callable,
    Literal,
    Mapping,
    Optional,
    Sequence,
    Union,
)

from nmtprobe.constants import (
    DESIGN_FLAGS,
    LENGTH_BUCKET_MAX_EDGE,
    LENGTH_BUCKET_WIDTH,
    REPORT_SCHEMA_VERSION,
    SCHEME_MISMATCH,
    TAG_MATCH_VALUES,
)
from nmtprobe.corpora import NLIExample, NliDataset
from nmtprobe.errors import (
    ArtifactIOError,
    DataFormatError,
    InputError,
    ValidationError,
)
from nmtprobe.numerics.tensor import Array
from nmtprobe.probe import ProbeConfig, ProbeModel, predict_batch, train_probe

logger = logging.getLogger(__name__)

REPORT_FORMATS = Literal["structured", "table-text"]
CELL_STATUSES = Literal["filled", "skipped", "multi_test"]
PathLike = Union[str, Path]

# (encoder id, dataset, split) -> features and gold labels
Featurizer = Callable[[str, NliDataset, str], tuple[Array, list[str]]]
# (encoder id, training dataset) -> trained probe
ProbeTrainer = Callable[[str, NliDataset], ProbeModel]
# (encoder id, train dataset, test dataset, split, predicted labels)
PredictionSink = Callable[[str, str, str, str, list[str]], None]


def percent(correct: int, n: int) -> str:
    """
    100·correct/n to one decimal place, rounding halves up, from integers only.

    Examples:
        >>> percent(3, 4)
        '75.0'

        >>> percent(2, 3)
        '66.7'
    """

    tenths = (2000 * correct + n) // (2 * n)

    return f"{tenths // 10}.{tenths % 10}"


@dataclass(frozen=True)
class EvalResult:
    """
    Counts behind one accuracy cell and the majority baseline of the same gold set.
    """

    dataset: str
    correct: int
    n: int
    majority_count: int
    majority_label: str

    @property
    def accuracy(self) -> Optional[float]:
        return self.correct / self.n if self.n else None

    @property
    def majority_baseline(self) -> Optional[float]:
        return self.majority_count / self.n if self.n else None

    @property
    def beats_majority(self) -> bool:
        return self.n > 0 and self.correct > self.majority_count

    def render(self) -> str:
        return percent(self.correct, self.n) if self.n else ""

    def render_majority(self) -> str:
        return percent(self.majority_count, self.n) if self.n else ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "correct": self.correct,
            "n": self.n,
            "accuracy": self.accuracy,
            "majority_count": self.majority_count,
            "majority_label": self.majority_label,
            "majority_baseline": self.majority_baseline,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalResult":
        return cls(
            dataset=data["dataset"],
            correct=int(data["correct"]),
            n=int(data["n"]),
            majority_count=int(data["majority_count"]),
            majority_label=data["majority_label"],
        )


def accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    """
    Share of exact matches.

    Examples:
        >>> accuracy(["a", "b", "a", "a"], ["a", "b", "a", "b"])
        0.75
    """

    if len(preds) != len(golds):
        raise InputError(f"{len(preds)} predictions for {len(golds)} gold labels")
    if not golds:
        raise InputError("accuracy of an empty prediction set is undefined")

    return sum(1 for p, g in zip(preds, golds) if p == g) / len(golds)


def _majority(histogram: Mapping[str, int]) -> tuple[int, str]:
    if not histogram:
        return 0, ""

    label, count = min(histogram.items(), key=lambda item: (-item[1], item[0]))

    return count, label


def majority_baseline(histogram: Mapping[str, int]) -> tuple[float, str]:
    """
    Accuracy of always predicting the most frequent label.

    Note:
        Ties go to the lexicographically smallest label.

    Examples:
        >>> majority_baseline({"entailed": 654, "not_entailed": 346})
        (0.654, 'entailed')

        >>> majority_baseline({"b": 5, "a": 5})
        (0.5, 'a')
    """

    total = sum(histogram.values())
    if total <= 0:
        raise InputError("majority baseline of an empty histogram is undefined")

    count, label = _majority(histogram)

    return count / total, label


def eval_result(dataset: str, preds: Sequence[str], golds: Sequence[str]) -> EvalResult:
    """Counts matches and the gold majority label. An empty set gives n=0."""

    if len(preds) != len(golds):
        raise InputError(
            f"{dataset}: {len(preds)} predictions for {len(golds)} gold labels"
        )

    count, label = _majority(Counter(golds))

    return EvalResult(
        dataset=dataset,
        correct=sum(1 for p, g in zip(preds, golds) if p == g),
        n=len(golds),
        majority_count=count,
        majority_label=label,
    )


@dataclass
class MatrixCell:
    encoder: str
    train: str
    test: str
    status: CELL_STATUSES
    result: Optional[EvalResult] = None
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "encoder": self.encoder,
            "train": self.train,
            "test": self.test,
            "status": self.status,
            "result": self.result.to_dict() if self.result else None,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MatrixCell":
        result = data.get("result")
        return cls(
            encoder=data["encoder"],
            train=data["train"],
            test=data["test"],
            status=data["status"],
            result=EvalResult.from_dict(result) if result else None,
            reason=data.get("reason", ""),
        )


@dataclass
class MatrixReport:
    """
    Train datasets × test datasets, per encoder.

    Note:
        A cell is "filled", "skipped" with a reason when the label schemes differ,
        or "multi_test" when a three-way dataset is evaluated split by split in a
        MultiTestReport instead.
    """

    encoders: list[str]
    rows: list[str]
    columns: list[str]
    cells: list[MatrixCell] = field(default_factory=list)
    probes_trained: int = 0

    def cell(self, encoder: str, train: str, test: str) -> MatrixCell:
        for cell in self.cells:
            if (cell.encoder, cell.train, cell.test) == (encoder, train, test):
                return cell

        raise InputError(f"no matrix cell for {encoder}, {train} → {test}")

    def filled(self) -> list[MatrixCell]:
        return [cell for cell in self.cells if cell.status == "filled"]

    def skipped(self) -> list[MatrixCell]:
        return [cell for cell in self.cells if cell.status == "skipped"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "encoders": self.encoders,
            "rows": self.rows,
            "columns": self.columns,
            "probes_trained": self.probes_trained,
            "cells": [cell.to_dict() for cell in self.cells],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MatrixReport":
        return cls(
            encoders=list(data["encoders"]),
            rows=list(data["rows"]),
            columns=list(data["columns"]),
            cells=[MatrixCell.from_dict(cell) for cell in data["cells"]],
            probes_trained=int(data.get("probes_trained", 0)),
        )


@dataclass
class MultiTestReport:
    """One three-way dataset evaluated on each of its test splits, per encoder."""

    train: str
    test: str
    encoders: list[str]
    splits: list[str]
    results: dict[str, dict[str, EvalResult]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "train": self.train,
            "test": self.test,
            "encoders": self.encoders,
            "splits": self.splits,
            "results": {
                encoder: {split: r.to_dict() for split, r in by_split.items()}
                for encoder, by_split in self.results.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MultiTestReport":
        return cls(
            train=data["train"],
            test=data["test"],
            encoders=list(data["encoders"]),
            splits=list(data["splits"]),
            results={
                encoder: {
                    split: EvalResult.from_dict(r) for split, r in by_split.items()
                }
                for encoder, by_split in data["results"].items()
            },
        )


@dataclass
class BreakdownRow:
    value: str
    results: dict[str, EvalResult]

    @property
    def n(self) -> int:
        return next(iter(self.results.values())).n if self.results else 0

    @property
    def majority(self) -> Optional[EvalResult]:
        return next(iter(self.results.values()), None)

    @property
    def average(self) -> Optional[float]:
        """Mean accuracy across encoders; None for an empty row."""

        scores = [r.accuracy for r in self.results.values() if r.accuracy is not None]

        return sum(scores) / len(scores) if scores else None

    @property
    def best_encoder(self) -> Optional[str]:
        if self.n == 0:
            return None

        return max(self.results, key=lambda encoder: self.results[encoder].correct)

    @property
    def all_beat_majority(self) -> bool:
        return self.n > 0 and all(r.beats_majority for r in self.results.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "n": self.n,
            "average": self.average,
            "best_encoder": self.best_encoder,
            "all_beat_majority": self.all_beat_majority,
            "results": {encoder: r.to_dict() for encoder, r in self.results.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BreakdownRow":
        return cls(
            value=data["value"],
            results={
                encoder: EvalResult.from_dict(r)
                for encoder, r in data["results"].items()
            },
        )


@dataclass
class BreakdownReport:
    """
    Per-value results for one grouping key: an attribute, a genre, the
    tag_match partition, or a length bucket.
    """

    key: str
    dataset: str
    encoders: list[str]
    rows: list[BreakdownRow] = field(default_factory=list)

    def row(self, value: str) -> BreakdownRow:
        for row in self.rows:
            if row.value == value:
                return row

        raise InputError(f"no {self.key} row {value!r} in the {self.dataset} breakdown")

    @property
    def total(self) -> int:
        return sum(row.n for row in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key,
            "dataset": self.dataset,
            "encoders": self.encoders,
            "rows": [row.to_dict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BreakdownReport":
        return cls(
            key=data["key"],
            dataset=data["dataset"],
            encoders=list(data["encoders"]),
            rows=[BreakdownRow.from_dict(row) for row in data["rows"]],
        )


Predictions = Union[Sequence[str], Mapping[str, Sequence[str]]]


def _by_encoder(preds: Predictions) -> dict[str, Sequence[str]]:
    if isinstance(preds, Mapping):
        return dict(preds)

    return {"model": preds}


def _grouped(
    key: str,
    dataset: str,
    preds: Predictions,
    golds: Sequence[str],
    groups: Sequence[str],
    order: Sequence[str],
) -> BreakdownReport:
    by_encoder = _by_encoder(preds)
    for encoder, predicted in by_encoder.items():
        if len(predicted) != len(golds):
            raise InputError(
                f"{encoder}: {len(predicted)} predictions for {len(golds)} gold labels"
            )

    members: dict[str, list[int]] = {value: [] for value in order}
    for i, value in enumerate(groups):
        members.setdefault(value, []).append(i)

    report = BreakdownReport(key=key, dataset=dataset, encoders=list(by_encoder))
    for value, rows in members.items():
        results = {
            encoder: eval_result(
                f"{dataset}:{value}" if dataset else value,
                [predicted[i] for i in rows],
                [golds[i] for i in rows],
            )
            for encoder, predicted in by_encoder.items()
        }
        report.rows.append(BreakdownRow(value, results))

    return report


def _require_values(
    key: str,
    values: Sequence[Optional[str]],
    golds: Sequence[str],
    allowed: Optional[Sequence[str]] = None,
) -> list[str]:
    if len(values) != len(golds):
        raise InputError(f"{len(values)} {key} values for {len(golds)} gold labels")

    checked = []
    for row, value in enumerate(values):
        if not value:
            raise InputError(f"row {row + 1} has no {key}")
        if allowed is not None and value not in allowed:
            raise InputError(
                f"row {row + 1} has {key} {value!r}, expected one of {list(allowed)}"
            )
        checked.append(value)

    return checked


def breakdown_by(
    key: str,
    preds: Predictions,
    golds: Sequence[str],
    values: Sequence[Optional[str]],
    dataset: str = "",
) -> BreakdownReport:
    """
    Groups examples by a meta value and evaluates each group independently.

    Args:
        key: Name of the grouping, such as "attribute" or "genre".
        preds: Predicted labels, or a mapping of encoder id to predicted labels.
        golds: Gold labels.
        values: The group of each example.
        dataset: Dataset id used in cell names.

    Returns:
        One row per value in sorted order. Each row carries its majority baseline,
        the cross-encoder average, the best encoder and whether all encoders
        beat the baseline.

    Errors:
        InputError naming the first row without a value.
    """

    groups = _require_values(key, values, golds)

    return _grouped(key, dataset, preds, golds, groups, sorted(set(groups)))


def breakdown_by_attribute(
    preds: Predictions,
    golds: Sequence[str],
    attributes: Sequence[Optional[str]],
    dataset: str = "",
) -> BreakdownReport:
    return breakdown_by("attribute", preds, golds, attributes, dataset)


def partition_eval(
    preds: Predictions,
    golds: Sequence[str],
    flags: Sequence[Optional[str]],
    dataset: str = "",
) -> BreakdownReport:
    """
    Splits examples by whether the swapped words share a part-of-speech tag.

    Returns:
        Rows "same" and "different", always both; an empty partition has n=0
        and no accuracy.
    """

    groups = _require_values("tag_match", flags, golds, TAG_MATCH_VALUES)

    return _grouped("tag_match", dataset, preds, golds, groups, TAG_MATCH_VALUES)


def bucket_label(length: int, width: int, max_edge: int) -> str:
    """
    Name of the half-open bucket holding `length`.

    Examples:
        >>> bucket_label(10, 10, 80)
        '10-20'

        >>> bucket_label(80, 10, 80)
        '80+'
    """

    if length >= max_edge:
        return f"{max_edge}+"

    low = (length // width) * width

    return f"{low}-{low + width}"


def length_buckets(
    preds: Predictions,
    golds: Sequence[str],
    lengths: Sequence[int],
    bucket_width: int = LENGTH_BUCKET_WIDTH,
    max_edge: int = LENGTH_BUCKET_MAX_EDGE,
    dataset: str = "",
) -> BreakdownReport:
    """
    Accuracy by context length in buckets [0,10), [10,20), … plus an overflow bucket.

    Note:
        Every bucket is listed, empty ones with n=0, so the counts column always
        sums to the number of examples.
    """

    if bucket_width < 1 or max_edge < bucket_width or max_edge % bucket_width:
        raise ValidationError(
            f"max_edge {max_edge} must be a positive multiple of bucket_width "
            f"{bucket_width}"
        )
    if len(lengths) != len(golds):
        raise InputError(f"{len(lengths)} lengths for {len(golds)} gold labels")

    order = [
        bucket_label(low, bucket_width, max_edge)
        for low in range(0, max_edge + 1, bucket_width)
    ]
    # lengths below 1 count in the first bucket
    groups = [
        bucket_label(max(length, 0), bucket_width, max_edge) for length in lengths
    ]

    return _grouped("length", dataset, preds, golds, groups, order)


def meta_breakdowns(
    dataset: str,
    examples: Sequence[NLIExample],
    preds: Mapping[str, Sequence[str]],
) -> list[BreakdownReport]:
    """
    Every breakdown the examples' meta columns support, plus context length.

    Note:
        A meta column is used only when every example carries it.
    """

    if not examples:
        return []

    golds = [example.label for example in examples]

    def column(key: str) -> Optional[list[Optional[str]]]:
        values = [example.meta.get(key) for example in examples]
        return values if all(values) else None

    tables = []
    attributes = column("attribute")
    if attributes is not None:
        tables.append(breakdown_by_attribute(preds, golds, attributes, dataset))
    genres = column("genre")
    if genres is not None:
        tables.append(breakdown_by("genre", preds, golds, genres, dataset))
    flags = column("tag_match")
    if flags is not None:
        tables.append(partition_eval(preds, golds, flags, dataset))

    lengths = [len(example.context) for example in examples]
    tables.append(length_buckets(preds, golds, lengths, dataset=dataset))

    return tables


def evaluate_probe(
    model: ProbeModel,
    features: Array,
    golds: Sequence[str],
    dataset: str,
) -> tuple[EvalResult, list[str]]:
    preds = predict_batch(model, features)

    return eval_result(dataset, preds, golds), preds


def probe_trainer(featurize: Featurizer, config: ProbeConfig) -> ProbeTrainer:
    """Trains on a dataset's train split and selects on its dev split."""

    def train(encoder: str, dataset: NliDataset) -> ProbeModel:
        features, labels = featurize(encoder, dataset, "train")
        dev_features, dev_labels = featurize(encoder, dataset, "dev")
        settings = replace(config, scheme=dataset.scheme.kind)
        model, _ = train_probe(features, labels, dev_features, dev_labels, settings)
        return model

    return train


def run_matrix(
    encoders: Sequence[str],
    datasets: Sequence[NliDataset],
    featurize: Featurizer,
    train: ProbeTrainer,
    on_predictions: Optional[PredictionSink] = None,
) -> tuple[MatrixReport, list[MultiTestReport]]:
    """
    Trains one probe per encoder and training dataset, then tests it everywhere.

    Note:
        A pair of datasets with different label schemes is never evaluated; its
        cell is marked skipped with the reason "scheme mismatch". Pairs of
        three-way datasets are evaluated on every test split (matched and
        mismatched) into a MultiTestReport, and their cell is marked "multi_test".

    Args:
        encoders: Encoder ids, passed through to `featurize` and `train`.
        datasets: Loaded datasets; each is both a row and a column.
        featurize: Pair features and gold labels for one dataset split.
        train: Produces the probe for one encoder and training dataset.
        on_predictions: Called with (encoder, train, test, split, predictions)
            after every evaluation.

    Returns:
        The matrix and one MultiTestReport per three-way dataset pair.

    Errors:
        InputError when a needed split is missing.
    """

    names = [dataset.name for dataset in datasets]
    report = MatrixReport(encoders=list(encoders), rows=names, columns=names)
    multi: dict[tuple[str, str], MultiTestReport] = {}

    for encoder in encoders:
        for train_set in datasets:
            model = train(encoder, train_set)
            report.probes_trained += 1
            logger.info("trained probe for %s on %s", encoder, train_set.name)

            for test_set in datasets:
                if train_set.scheme != test_set.scheme:
                    report.cells.append(
                        MatrixCell(
                            encoder,
                            train_set.name,
                            test_set.name,
                            "skipped",
                            reason=SCHEME_MISMATCH,
                        )
                    )
                    logger.info(
                        "skipped %s → %s for %s: %s",
                        train_set.name,
                        test_set.name,
                        encoder,
                        SCHEME_MISMATCH,
                    )
                    continue

                if train_set.scheme.kind == "three_way":
                    splits = test_set.test_splits()
                    if not splits:
                        raise InputError(f"dataset {test_set.name!r} has no test split")

                    key = (train_set.name, test_set.name)
                    table = multi.setdefault(
                        key,
                        MultiTestReport(
                            train_set.name, test_set.name, list(encoders), splits
                        ),
                    )
                    by_split = table.results.setdefault(encoder, {})
                    for split in splits:
                        features, golds = featurize(encoder, test_set, split)
                        by_split[split], preds = evaluate_probe(
                            model, features, golds, f"{test_set.name}:{split}"
                        )
                        if on_predictions is not None:
                            on_predictions(
                                encoder, train_set.name, test_set.name, split, preds
                            )
                    report.cells.append(
                        MatrixCell(encoder, train_set.name, test_set.name, "multi_test")
                    )
                    continue

                features, golds = featurize(encoder, test_set, "test")
                result, preds = evaluate_probe(model, features, golds, test_set.name)
                if on_predictions is not None:
                    on_predictions(
                        encoder, train_set.name, test_set.name, "test", preds
                    )
                report.cells.append(
                    MatrixCell(encoder, train_set.name, test_set.name, "filled", result)
                )
                logger.info(
                    "%s: %s → %s accuracy %s%% (n=%d)",
                    encoder,
                    train_set.name,
                    test_set.name,
                    result.render(),
                    result.n,
                )

    return report, list(multi.values())


@dataclass
class CombinerRow:
    encoder: str
    combiner: str
    results: dict[str, EvalResult]

    def to_dict(self) -> dict[str, Any]:
        return {
            "encoder": self.encoder,
            "combiner": self.combiner,
            "results": {name: r.to_dict() for name, r in self.results.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CombinerRow":
        return cls(
            encoder=data["encoder"],
            combiner=data["combiner"],
            results={
                name: EvalResult.from_dict(r) for name, r in data["results"].items()
            },
        )


@dataclass
class CombinerReport:
    """Same-dataset accuracy per encoder and combiner, side by side."""

    datasets: list[str]
    rows: list[CombinerRow] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "datasets": self.datasets,
            "rows": [row.to_dict() for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CombinerReport":
        return cls(
            datasets=list(data["datasets"]),
            rows=[CombinerRow.from_dict(row) for row in data["rows"]],
        )


def compare_combiners(matrices: Mapping[str, MatrixReport]) -> CombinerReport:
    """
    Collects each matrix's diagonal (train and test on the same dataset).

    Args:
        matrices: Matrix per combiner name, such as "concat" and "infersent".

    Returns:
        Rows ordered by encoder, then combiner in the order given.
    """

    if not matrices:
        raise InputError("compare_combiners needs at least one matrix")

    first = next(iter(matrices.values()))
    report = CombinerReport(datasets=list(first.columns))
    for encoder in first.encoders:
        for combiner, matrix in matrices.items():
            results = {}
            for name in report.datasets:
                cell = matrix.cell(encoder, name, name)
                if cell.result is not None:
                    results[name] = cell.result
            report.rows.append(CombinerRow(encoder, combiner, results))

    return report


@dataclass
class ExperimentReport:
    """
    Everything one run produced, with the provenance needed to reproduce it.
    """

    seed: int
    config_hash: str
    encoders: dict[str, str] = field(default_factory=dict)
    datasets: dict[str, str] = field(default_factory=dict)
    settings: dict[str, str] = field(default_factory=dict)
    design_flags: dict[str, str] = field(default_factory=lambda: dict(DESIGN_FLAGS))
    external_baselines: dict[str, str] = field(default_factory=dict)
    matrix: Optional[MatrixReport] = None
    multi_test: list[MultiTestReport] = field(default_factory=list)
    breakdowns: list[BreakdownReport] = field(default_factory=list)
    combiners: Optional[CombinerReport] = None
    evaluations: list[EvalResult] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "encoders": self.encoders,
            "datasets": self.datasets,
            "settings": self.settings,
            "design_flags": self.design_flags,
            "external_baselines": self.external_baselines,
            "matrix": self.matrix.to_dict() if self.matrix else None,
            "multi_test": [table.to_dict() for table in self.multi_test],
            "breakdowns": [table.to_dict() for table in self.breakdowns],
            "combiners": self.combiners.to_dict() if self.combiners else None,
            "evaluations": [result.to_dict() for result in self.evaluations],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentReport":
        version = data.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise DataFormatError(
                f"report schema version {version!r}, expected {REPORT_SCHEMA_VERSION}"
            )

        return cls(
            seed=int(data["seed"]),
            config_hash=data["config_hash"],
            encoders=dict(data["encoders"]),
            datasets=dict(data["datasets"]),
            settings=dict(data["settings"]),
            design_flags=dict(data["design_flags"]),
            external_baselines=dict(data["external_baselines"]),
            matrix=MatrixReport.from_dict(data["matrix"]) if data["matrix"] else None,
            multi_test=[MultiTestReport.from_dict(t) for t in data["multi_test"]],
            breakdowns=[BreakdownReport.from_dict(t) for t in data["breakdowns"]],
            combiners=(
                CombinerReport.from_dict(data["combiners"])
                if data["combiners"]
                else None
            ),
            evaluations=[EvalResult.from_dict(r) for r in data["evaluations"]],
        )


def _table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(line[i]) for line in [header, *rows]) for i in range(len(header))
    ]

    def fmt(line: Sequence[str]) -> str:
        cells = [line[0].ljust(widths[0])]
        cells += [cell.rjust(width) for cell, width in zip(line[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    rule = "-" * len(fmt(header))

    return "\n".join([title, rule, fmt(header), rule, *map(fmt, rows), rule])


def render_matrix(matrix: MatrixReport) -> str:
    """
    Train datasets as rows, one column group per test dataset with a column per
    encoder. The first row holds each test set's majority baseline.
    """

    header = ["train"] + [
        f"{test}/{encoder}" for test in matrix.columns for encoder in matrix.encoders
    ]

    majority = ["MAJ"]
    for test in matrix.columns:
        results = [
            c.result for c in matrix.cells if c.test == test and c.result is not None
        ]
        for _ in matrix.encoders:
            majority.append(results[0].render_majority() if results else "")

    rows = [majority]
    for train in matrix.rows:
        line = [train]
        for test in matrix.columns:
            for encoder in matrix.encoders:
                cell = matrix.cell(encoder, train, test)
                if cell.status == "filled" and cell.result is not None:
                    line.append(cell.result.render())
                elif cell.status == "multi_test":
                    line.append("(multi)")
                else:
                    line.append("-")
        rows.append(line)

    title = "Accuracy by training (rows) and test (columns) dataset"

    return _table(title, header, rows)


def render_multi_test(table: MultiTestReport) -> str:
    header = ["split", *table.encoders, "MAJ"]
    rows = []
    for split in table.splits:
        line = [split]
        result = None
        for encoder in table.encoders:
            result = table.results.get(encoder, {}).get(split)
            line.append(result.render() if result else "")
        line.append(result.render_majority() if result else "")
        rows.append(line)

    return _table(f"{table.train} → {table.test} by test split", header, rows)


def render_breakdown(table: BreakdownReport) -> str:
    header = [table.key, *table.encoders, "avg", "MAJ", "n", "all>MAJ"]
    rows = []
    for row in table.rows:
        average = row.average
        majority = row.majority
        rows.append(
            [
                row.value,
                *[row.results[encoder].render() for encoder in table.encoders],
                f"{100 * average:.1f}" if average is not None else "",
                majority.render_majority() if majority else "",
                str(row.n),
                "yes" if row.all_beat_majority else "",
            ]
        )

    return _table(f"{table.dataset} by {table.key}", header, rows)


def render_combiners(table: CombinerReport) -> str:
    header = ["encoder", "combiner", *table.datasets]
    rows = [
        [row.encoder, row.combiner]
        + [row.results[d].render() if d in row.results else "" for d in table.datasets]
        for row in table.rows
    ]

    majority = ["Majority", ""]
    for name in table.datasets:
        found = [row.results[name] for row in table.rows if name in row.results]
        majority.append(found[0].render_majority() if found else "")
    rows.append(majority)

    return _table("Same-dataset accuracy by combiner", header, rows)


def render_report(report: ExperimentReport) -> str:
    sections = [
        _table(
            "Run",
            ["key", "value"],
            [
                ["schema_version", str(report.schema_version)],
                ["seed", str(report.seed)],
                ["config_hash", report.config_hash],
                *[[f"encoder {k}", v] for k, v in report.encoders.items()],
                *[[f"dataset {k}", v] for k, v in report.datasets.items()],
            ],
        )
    ]

    if report.matrix is not None:
        sections.append(render_matrix(report.matrix))
    sections.extend(render_multi_test(table) for table in report.multi_test)
    if report.combiners is not None:
        sections.append(render_combiners(report.combiners))
    sections.extend(render_breakdown(table) for table in report.breakdowns)

    if report.evaluations:
        sections.append(
            _table(
                "Evaluations",
                ["dataset", "accuracy", "MAJ", "majority label", "n"],
                [
                    [
                        r.dataset,
                        r.render(),
                        r.render_majority(),
                        r.majority_label,
                        str(r.n),
                    ]
                    for r in report.evaluations
                ],
            )
        )
    if report.external_baselines:
        sections.append(
            _table(
                "External baselines (entered by hand)",
                ["name", "value"],
                [[k, v] for k, v in report.external_baselines.items()],
            )
        )

    return "\n\n".join(sections) + "\n"


def emit_report(
    report: ExperimentReport,
    path: PathLike,
    format: REPORT_FORMATS = "structured",
) -> Path:
    """
    Writes the report as indented JSON ("structured") or aligned tables
    ("table-text").

    Note:
        Field order is fixed and nothing time-dependent is written, so equal runs
        give byte-identical files.
    """

    if format == "structured":
        text = json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n"
    elif format == "table-text":
        text = render_report(report)
    else:
        raise ValidationError(f"unknown report format {format!r}")

    target = Path(path)
    try:
        target.write_text(text, encoding="utf-8")
    except OSError as error:
        raise ArtifactIOError(f"cannot write {target}: {error}") from error

    logger.info("wrote %s report to %s", format, target)

    return target


def load_report(path: PathLike) -> ExperimentReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error
    except (json.JSONDecodeError, UnicodeDecodeError) as error:
        raise DataFormatError(f"{path}: {error}") from error

    return ExperimentReport.from_dict(data)

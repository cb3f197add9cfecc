"""
The steps shared by the subcommands, with every artifact cached by content hash.

    <out>/cache/nmt/<key>.sprb       checkpoints trained from [encoder:<id>] corpora
    <out>/cache/dumps/<key>.sprr     sentence vectors, one file per split and side
    <out>/cache/probes/<key>.probe   trained probes
    <out>/manifest.config            seed, config hash and input file digests

Keys come from sha256 digests of inputs and settings, never from timestamps.
"""

import hashlib
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, cast

from nmtprobe.config import RunConfig
from nmtprobe.corpora import (
    NLIExample,
    NliDataset,
    Vocabulary,
    build_vocab,
    encode,
    file_digest,
    label_scheme,
    load_nli_dataset,
    load_parallel,
)
from nmtprobe.errors import CompatibilityError
from nmtprobe.evalreport import (
    BreakdownReport,
    EvalResult,
    ExperimentReport,
    MatrixReport,
    MultiTestReport,
    ProbeTrainer,
    breakdown_by_attribute,
    compare_combiners,
    eval_result,
    evaluate_probe,
    majority_baseline,
    meta_breakdowns,
    run_matrix,
)
from nmtprobe.numerics.tensor import Array
from nmtprobe.probe import ProbeModel, load_probe, save_probe, train_probe
from nmtprobe.records import write_record
from nmtprobe.representations import (
    COMBINERS,
    RepresentationDump,
    cache_key,
    combine_matrix,
    extract_batch,
    read_dump,
    write_dump,
)
from nmtprobe.seq2seq.checkpoint import load_checkpoint, save_checkpoint
from nmtprobe.seq2seq.model import NmtModel
from nmtprobe.seq2seq.training import train_nmt

logger = logging.getLogger(__name__)

SIDES = ["context", "hypothesis"]


class ArtifactCache:
    """Files under `root/<kind>/`, named by content key."""

    def __init__(self, root: Path) -> None:
        self.root = root

    def path(self, kind: str, key: str, suffix: str) -> Path:
        return self.root / kind / f"{key}{suffix}"

    def lookup(self, kind: str, key: str, suffix: str) -> tuple[Path, bool]:
        """
        Returns:
            The artifact path (its directory created) and whether it exists.
        """

        path = self.path(kind, key, suffix)
        if path.exists():
            logger.info("cache hit %s/%s", kind, key[:16])
            return path, True

        logger.info("cache miss %s/%s", kind, key[:16])
        path.parent.mkdir(parents=True, exist_ok=True)

        return path, False


@dataclass
class LoadedEncoder:
    name: str
    model: NmtModel
    src_vocab: Vocabulary
    digest: str
    path: Path


def _digest(*parts: str) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part.encode("utf-8"))
        digest.update(b"\0")

    return digest.hexdigest()


class Pipeline:
    """
    Loads datasets, trains or loads encoders, extracts dumps and trains probes
    for one RunConfig. Every result is memoized in memory and cached on disk.
    """

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.cache = ArtifactCache(config.out_dir / "cache")
        self.max_train_len = config.nmt_config(
            config.vocab_size, config.vocab_size
        ).max_train_len
        self._datasets: dict[str, NliDataset] = {}
        self._encoders: dict[str, LoadedEncoder] = {}
        self._dumps: dict[tuple[str, ...], tuple[RepresentationDump, str]] = {}

    def dataset(self, name: str) -> NliDataset:
        if name not in self._datasets:
            spec = self.config.dataset(name)
            self._datasets[name] = load_nli_dataset(
                spec.name, spec.source(), label_scheme(spec.scheme)
            )

        return self._datasets[name]

    def checkpoint_path(self, name: str) -> Path:
        """
        The encoder's checkpoint: the configured file, or one trained from its
        corpora and cached under the digest of everything that determines it.
        """

        spec = self.config.encoder(name)
        if spec.checkpoint is not None:
            return spec.checkpoint

        size = self.config.vocab_size
        record = self.config.nmt_config(size, size).to_record()
        key = _digest(
            "nmt",
            str(self.config.seed),
            *[f"{k}={file_digest(p)}" for k, p in sorted(spec.corpora.items())],
            *[f"{k}={v}" for k, v in sorted(record.items())],
        )
        path, hit = self.cache.lookup("nmt", key, ".sprb")
        if hit:
            return path

        train, _ = load_parallel(
            spec.corpora["train_source"],
            spec.corpora["train_target"],
            self.max_train_len,
        )
        dev, _ = load_parallel(
            spec.corpora["dev_source"], spec.corpora["dev_target"], None, split="dev"
        )
        src_vocab = build_vocab(
            (ex.source_tokens for ex in train), self.config.vocab_size
        )
        tgt_vocab = build_vocab(
            (ex.target_tokens for ex in train), self.config.vocab_size
        )
        logger.info(
            "encoder %s: vocabularies of %d source and %d target tokens",
            name,
            len(src_vocab),
            len(tgt_vocab),
        )

        nmt_config = self.config.nmt_config(len(src_vocab), len(tgt_vocab))
        checkpoint = train_nmt(
            train, dev, nmt_config, self.config.seed, src_vocab, tgt_vocab
        )
        save_checkpoint(checkpoint, path)

        return path

    def encoder(self, name: str) -> LoadedEncoder:
        if name not in self._encoders:
            path = self.checkpoint_path(name)
            checkpoint, digest = load_checkpoint(path)
            self._encoders[name] = LoadedEncoder(
                name, checkpoint.model(), checkpoint.src_vocab, digest, path
            )

        return self._encoders[name]

    def split_examples(self, dataset: NliDataset, split: str) -> list[NLIExample]:
        """
        The split's examples; the train split drops pairs with a sentence longer
        than max_train_len, every other split keeps everything.
        """

        examples = dataset.split(split)
        if split != "train":
            return examples

        limit = self.max_train_len
        kept = [
            ex
            for ex in examples
            if len(ex.context) <= limit and len(ex.hypothesis) <= limit
        ]
        if len(kept) < len(examples):
            logger.info(
                "%s train: length filter dropped %d of %d pairs",
                dataset.name,
                len(examples) - len(kept),
                len(examples),
            )

        return kept

    def sentence_dump(
        self,
        encoder: str,
        dataset: NliDataset,
        split: str,
        side: str,
    ) -> tuple[RepresentationDump, str]:
        """
        Vectors for one side of a split, in split order.

        Returns:
            The dump and the sha256 of its file.
        """

        memo = (encoder, dataset.name, split, side)
        if memo in self._dumps:
            return self._dumps[memo]

        loaded = self.encoder(encoder)
        scheme = self.config.scheme
        limit = str(self.max_train_len) if split == "train" else "all"
        key = cache_key(loaded.digest, dataset.digest, scheme, split, side, limit)
        path, hit = self.cache.lookup("dumps", key, ".sprr")

        if hit:
            dump = read_dump(path)
            digest = file_digest(path)
        else:
            examples = self.split_examples(dataset, split)
            sentences = [
                encode(getattr(ex, side), loaded.src_vocab) for ex in examples
            ]
            dump = RepresentationDump(
                vectors=extract_batch(loaded.model, sentences, scheme),
                scheme=scheme,
                row_ids=[ex.row for ex in examples],
            )
            digest = write_dump(path, dump)

        self._dumps[memo] = (dump, digest)

        return dump, digest

    def dump_digests(
        self, encoder: str, dataset: NliDataset, split: str
    ) -> dict[str, str]:
        return {
            f"dump.{split}.{side}": self.sentence_dump(encoder, dataset, split, side)[1]
            for side in SIDES
        }

    def features(
        self,
        encoder: str,
        dataset: NliDataset,
        split: str,
        combiner: Optional[COMBINERS] = None,
    ) -> tuple[Array, list[str]]:
        """Pair features and gold labels of a split, matched by row id."""

        contexts, _ = self.sentence_dump(encoder, dataset, split, "context")
        hypotheses, _ = self.sentence_dump(encoder, dataset, split, "hypothesis")
        if contexts.row_ids != hypotheses.row_ids:
            raise CompatibilityError(
                f"{dataset.name}:{split} context and hypothesis dumps list "
                f"different rows"
            )

        gold = {ex.row: ex.label for ex in dataset.split(split)}
        features = combine_matrix(
            contexts.vectors, hypotheses.vectors, combiner or self.config.combiner
        )

        return features, [gold[row] for row in contexts.row_ids]

    def probe_path(
        self,
        encoder: str,
        dataset: NliDataset,
        combiner: COMBINERS,
    ) -> Path:
        settings = replace(self.config.probe, scheme=dataset.scheme.kind)
        key = _digest(
            "probe",
            self.encoder(encoder).digest,
            dataset.digest,
            self.config.scheme,
            combiner,
            str(self.max_train_len),
            *[f"{k}={v}" for k, v in sorted(settings.to_record().items())],
        )

        return self.cache.path("probes", key, ".probe")

    def probe(
        self,
        encoder: str,
        dataset: NliDataset,
        combiner: Optional[COMBINERS] = None,
    ) -> tuple[ProbeModel, Path]:
        """
        The probe for `encoder` trained on `dataset`'s train split and selected on
        its dev split.

        Returns:
            The probe and its cached file.
        """

        combiner = combiner or self.config.combiner
        key = self.probe_path(encoder, dataset, combiner).stem
        path, hit = self.cache.lookup("probes", key, ".probe")
        if hit:
            model, record = load_probe(path)
            self.check_probe(record, encoder, dataset, combiner)
            return model, path

        train_x, train_y = self.features(encoder, dataset, "train", combiner)
        dev_x, dev_y = self.features(encoder, dataset, "dev", combiner)
        settings = replace(self.config.probe, scheme=dataset.scheme.kind)
        model, log = train_probe(train_x, train_y, dev_x, dev_y, settings)
        logger.info(
            "probe %s on %s: best dev accuracy %.4f at epoch %d",
            encoder,
            dataset.name,
            log.dev_accuracies[log.best_epoch - 1],
            log.best_epoch,
        )

        provenance = {
            "encoder": encoder,
            "encoder_digest": self.encoder(encoder).digest,
            "dataset": dataset.name,
            "dataset_digest": dataset.digest,
            "representation": self.config.scheme,
            "combiner": combiner,
        }
        provenance.update(self.dump_digests(encoder, dataset, "train"))
        provenance.update(self.dump_digests(encoder, dataset, "dev"))
        save_probe(model, path, provenance)

        return model, path

    def check_probe(
        self,
        record: dict[str, str],
        encoder: str,
        dataset: Optional[NliDataset] = None,
        combiner: Optional[COMBINERS] = None,
    ) -> None:
        """
        Errors:
            CompatibilityError when the probe was trained on another encoder,
            representation scheme or combiner, or, for its own training dataset,
            on dumps that no longer match the current ones.
        """

        expected = {
            "encoder_digest": self.encoder(encoder).digest,
            "representation": self.config.scheme,
            "combiner": combiner or self.config.combiner,
        }
        for key, value in expected.items():
            if key in record and record[key] != value:
                raise CompatibilityError(
                    f"probe was trained with {key} {record[key]!r}, "
                    f"this run uses {value!r}"
                )

        if dataset is None or record.get("dataset_digest") != dataset.digest:
            return

        for key, digest in record.items():
            if not key.startswith("dump."):
                continue
            _, split, side = key.split(".")
            current = self.sentence_dump(encoder, dataset, split, side)[1]
            if current != digest:
                raise CompatibilityError(
                    f"probe was trained on a {split} {side} dump with digest "
                    f"{digest[:12]}, the current dump has {current[:12]}"
                )

    def evaluate(
        self,
        encoder: str,
        probe_file: Path,
        dataset_name: str,
        split: str = "test",
    ) -> tuple[EvalResult, list[BreakdownReport]]:
        """
        Applies a saved probe to one split, with every breakdown its meta
        columns allow.
        """

        dataset = self.dataset(dataset_name)
        model, record = load_probe(probe_file)
        if model.label_scheme != dataset.scheme:
            raise CompatibilityError(
                f"probe predicts {model.label_scheme.kind} labels, "
                f"{dataset.name} is {dataset.scheme.kind}"
            )
        raw = record.get("combiner", self.config.combiner)
        if raw not in ("concat", "infersent"):
            raise CompatibilityError(f"probe sidecar names combiner {raw!r}")
        combiner = cast(COMBINERS, raw)
        self.check_probe(record, encoder, dataset, combiner)

        features, golds = self.features(encoder, dataset, split, combiner)
        name = dataset.name if split == "test" else f"{dataset.name}:{split}"
        result, preds = evaluate_probe(model, features, golds, name)
        examples = self.split_examples(dataset, split)

        return result, meta_breakdowns(name, examples, {encoder: preds})

    def baseline(
        self, dataset_name: str
    ) -> tuple[list[EvalResult], list[BreakdownReport]]:
        """
        Majority baseline of every split and, with an attribute column, of every
        attribute within each split.
        """

        dataset = self.dataset(dataset_name)
        results = []
        tables = []
        for split, examples in dataset.splits.items():
            golds = [ex.label for ex in examples]
            _, label = majority_baseline(dataset.stats.histograms[split])
            name = f"{dataset.name}:{split}"
            results.append(eval_result(name, [label] * len(golds), golds))

            attributes = [ex.meta.get("attribute") for ex in examples]
            if all(attributes):
                tables.append(
                    breakdown_by_attribute(
                        {"MAJ": [label] * len(golds)}, golds, attributes, name
                    )
                )

        return results, tables

    def trainer(self, combiner: COMBINERS) -> ProbeTrainer:
        def train(encoder: str, dataset: NliDataset) -> ProbeModel:
            return self.probe(encoder, dataset, combiner)[0]

        return train

    def matrix(self) -> ExperimentReport:
        """
        Every encoder × training dataset × test dataset of the `[matrix]`
        section, with breakdowns of the same-dataset predictions.
        """

        encoders = self.config.matrix_encoders
        datasets = [self.dataset(name) for name in self.config.matrix_datasets]
        primary = self.config.combiner
        combiners: Sequence[COMBINERS] = (
            ["concat", "infersent"] if self.config.compare_combiners else [primary]
        )

        diagonal: dict[tuple[str, str], dict[str, list[str]]] = {}

        def collect(
            encoder: str, train: str, test: str, split: str, preds: list[str]
        ) -> None:
            if train == test:
                diagonal.setdefault((test, split), {})[encoder] = preds

        matrices: dict[str, MatrixReport] = {}
        multi_test: list[MultiTestReport] = []
        for combiner in combiners:

            def featurize(
                encoder: str, dataset: NliDataset, split: str
            ) -> tuple[Array, list[str]]:
                return self.features(encoder, dataset, split, combiner)

            matrix, tables = run_matrix(
                encoders,
                datasets,
                featurize,
                self.trainer(combiner),
                collect if combiner == primary else None,
            )
            matrices[combiner] = matrix
            if combiner == primary:
                multi_test = tables

        breakdowns = []
        for (name, split), preds in diagonal.items():
            examples = self.split_examples(self.dataset(name), split)
            label = name if split == "test" else f"{name}:{split}"
            breakdowns.extend(meta_breakdowns(label, examples, preds))

        return ExperimentReport(
            seed=self.config.seed,
            config_hash=self.config.digest,
            encoders={name: self.encoder(name).digest for name in encoders},
            datasets={dataset.name: dataset.digest for dataset in datasets},
            settings=self.config.settings(),
            external_baselines=dict(self.config.external_baselines),
            matrix=matrices[primary],
            multi_test=multi_test,
            breakdowns=breakdowns,
            combiners=compare_combiners(matrices) if len(matrices) > 1 else None,
        )

    def report(self) -> ExperimentReport:
        """An empty report carrying this run's provenance."""

        return ExperimentReport(
            seed=self.config.seed,
            config_hash=self.config.digest,
            settings=self.config.settings(),
            external_baselines=dict(self.config.external_baselines),
        )

    def write_manifest(self) -> Path:
        """
        Writes `<out>/manifest.config`: seed, config hash and the digest of every
        declared input file.
        """

        record: dict[str, object] = {
            "seed": self.config.seed,
            "config_hash": self.config.digest,
        }
        for spec in sorted(self.config.encoders.values(), key=lambda s: s.name):
            paths = dict(spec.corpora)
            if spec.checkpoint is not None:
                paths["checkpoint"] = spec.checkpoint
            for key in sorted(paths):
                record[f"encoder.{spec.name}.{key}"] = file_digest(paths[key])
        for dataset in sorted(self.config.datasets.values(), key=lambda s: s.name):
            for key, path in sorted(dataset.files.items()):
                record[f"dataset.{dataset.name}.{key}"] = file_digest(path)

        self.config.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.config.out_dir / "manifest.config"
        write_record(path, "manifest", record)

        return path

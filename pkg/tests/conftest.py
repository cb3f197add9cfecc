from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from nmtprobe.corpora import NLIExample, NliDataset, compute_stats, label_scheme
from nmtprobe.seq2seq.model import NmtConfig, NmtModel

WORDS = [f"w{i}" for i in range(12)]

NliWriter = Callable[[str, Sequence[Sequence[str]], Sequence[str]], Path]


def sentence(rng: np.random.Generator, low: int = 3, high: int = 7) -> list[str]:
    return [WORDS[i] for i in rng.integers(0, len(WORDS), rng.integers(low, high))]


def entailment_label(context: Sequence[str], kind: str) -> str:
    """The gold rule of the synthetic sets: does the context mention w0?"""

    if kind == "two_way":
        return "entailed" if "w0" in context else "not_entailed"

    if "w0" in context:
        return "entailment"

    return "contradiction" if "w1" in context else "neutral"


def make_dataset(
    name: str,
    kind: str,
    splits: dict[str, int],
    seed: int = 0,
) -> NliDataset:
    rng = np.random.default_rng(seed)
    scheme = label_scheme(kind)
    examples: dict[str, list[NLIExample]] = {}
    row = 0
    for split, count in splits.items():
        rows = []
        for _ in range(count):
            context = sentence(rng)
            hypothesis = sentence(rng)
            label = entailment_label(context, kind)
            rows.append(NLIExample(context, hypothesis, label, {"split": split}, row))
            row += 1
        examples[split] = rows

    return NliDataset(name, scheme, examples, compute_stats(examples, scheme), name)


@pytest.fixture
def write_nli(tmp_path: Path) -> NliWriter:
    def write(name: str, rows: Sequence[Sequence[str]], header: Sequence[str]) -> Path:
        path = tmp_path / name
        lines = ["\t".join(header)] + ["\t".join(row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write


@pytest.fixture
def toy_model() -> NmtModel:
    config = NmtConfig(src_vocab_size=12, tgt_vocab_size=12, d=4, layers=2)
    return NmtModel(config, np.random.default_rng(0))


def _write_parallel(directory: Path, split: str, count: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    sources = [" ".join(sentence(rng)) for _ in range(count)]
    (directory / f"{split}.src").write_text("\n".join(sources) + "\n")
    (directory / f"{split}.tgt").write_text("\n".join(sources) + "\n")


def _write_nli_file(
    path: Path,
    kind: str,
    splits: dict[str, int],
    seed: int,
    meta: str = "",
) -> None:
    rng = np.random.default_rng(seed)
    header = ["context", "hypothesis", "label", "split"] + ([meta] if meta else [])
    lines = ["\t".join(header)]
    for split, count in splits.items():
        for i in range(count):
            context = sentence(rng)
            row = [
                " ".join(context),
                " ".join(sentence(rng)),
                entailment_label(context, kind),
                split,
            ]
            if meta == "attribute":
                row.append(["sentient", "volitional"][i % 2])
            elif meta == "tag_match":
                row.append(["same", "different"][i % 2])
            elif meta == "genre":
                row.append(["fiction", "travel"][i % 2])
            lines.append("\t".join(row))

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def run_config(tmp_path: Path) -> Path:
    """
    A desk-sized run: two encoders trained on copy corpora, three two-way
    datasets and one three-way dataset with matched and mismatched test splits.
    """

    for name, seed in (("en-a", 1), ("en-b", 2)):
        corpus = tmp_path / name
        corpus.mkdir()
        _write_parallel(corpus, "train", 40, seed)
        _write_parallel(corpus, "dev", 8, seed + 10)

    two_way = {"train": 24, "dev": 8, "test": 12}
    _write_nli_file(tmp_path / "dpr.tsv", "two_way", two_way, 3)
    _write_nli_file(tmp_path / "spr.tsv", "two_way", two_way, 4, "attribute")
    _write_nli_file(tmp_path / "fnplus.tsv", "two_way", two_way, 5, "tag_match")
    three_way = {"train": 24, "dev": 8, "test_matched": 8, "test_mismatched": 8}
    _write_nli_file(tmp_path / "multi.tsv", "three_way", three_way, 6, "genre")

    config = tmp_path / "run.config"
    config.write_text(
        """
[run]
seed = 7
profile = desk

[paths]
out = runs

[nmt]
vocab_size = 20
d = 4
layers = 1
batch_size = 8
eval_every = 5
max_steps = 10

[probe]
max_epochs = 3
batch_size = 8

[encoder:en-a]
train_source = en-a/train.src
train_target = en-a/train.tgt
dev_source = en-a/dev.src
dev_target = en-a/dev.tgt

[encoder:en-b]
train_source = en-b/train.src
train_target = en-b/train.tgt
dev_source = en-b/dev.src
dev_target = en-b/dev.tgt

[dataset:dpr]
scheme = two_way
path = dpr.tsv

[dataset:spr]
scheme = two_way
path = spr.tsv

[dataset:fnplus]
scheme = two_way
path = fnplus.tsv

[dataset:multi]
scheme = three_way
path = multi.tsv

[external_baselines]
hypothesis_only_spr = 0.0
""",
        encoding="utf-8",
    )

    return config

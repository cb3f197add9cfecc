import csv
import hashlib
import io
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Optional, Sequence, Union

from nmtprobe.constants import (
    BOS,
    DEFAULT_VOCAB_SIZE,
    EOS,
    LONG_SENTENCE_THRESHOLD,
    NLI_META_COLUMNS,
    NLI_REQUIRED_COLUMNS,
    PAD,
    RESERVED_TOKENS,
    TAG_MATCH_VALUES,
    THREE_WAY_LABELS,
    TWO_WAY_LABELS,
    UNK,
)
from nmtprobe.errors import (
    AlignmentError,
    ArtifactIOError,
    DataFormatError,
    InputError,
    LabelError,
    ValidationError,
)

logger = logging.getLogger(__name__)

SCHEME_KINDS = Literal["two_way", "three_way"]
PathLike = Union[str, Path]

# share of training pairs the length filter may drop before warning
DROP_WARNING_SHARE = 0.10


@dataclass(frozen=True)
class LabelScheme:
    kind: SCHEME_KINDS

    @property
    def labels(self) -> list[str]:
        return list(TWO_WAY_LABELS if self.kind == "two_way" else THREE_WAY_LABELS)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(
                f"label {label!r} is not in the {self.kind} scheme {self.labels}"
            ) from None

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)


TWO_WAY = LabelScheme("two_way")
THREE_WAY = LabelScheme("three_way")


def label_scheme(kind: str) -> LabelScheme:
    if kind not in ("two_way", "three_way"):
        raise ValidationError(f"unknown label scheme {kind!r}")

    return TWO_WAY if kind == "two_way" else THREE_WAY


@dataclass
class Vocabulary:
    """
    Token ↔ index maps. Indices 0-3 are PAD, UNK, BOS and EOS.
    """

    token_of: list[str]
    max_size: int = DEFAULT_VOCAB_SIZE
    id_of: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if self.token_of[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValidationError("vocabulary must start with the reserved tokens")
        if len(self.token_of) > self.max_size:
            raise ValidationError(
                f"vocabulary of {len(self.token_of)} exceeds max_size {self.max_size}"
            )
        self.id_of = {token: i for i, token in enumerate(self.token_of)}

    def __len__(self) -> int:
        return len(self.token_of)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.token_of).encode("utf-8")).hexdigest()

    def save(self, path: PathLike) -> None:
        try:
            Path(path).write_text("\n".join(self.token_of) + "\n", encoding="utf-8")
        except OSError as error:
            raise ArtifactIOError(f"cannot write {path}: {error}") from error

    @classmethod
    def load(cls, path: PathLike, max_size: Optional[int] = None) -> "Vocabulary":
        try:
            tokens = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as error:
            raise ArtifactIOError(f"cannot read {path}: {error}") from error
        except UnicodeDecodeError as error:
            raise DataFormatError(
                f"{path}: not valid UTF-8 ({error.reason})"
            ) from error

        return cls(tokens, max_size if max_size is not None else max(len(tokens), 5))


@dataclass(frozen=True)
class ParallelExample:
    source_tokens: list[str]
    target_tokens: list[str]


@dataclass(frozen=True)
class NLIExample:
    context: list[str]
    hypothesis: list[str]
    label: str
    meta: dict[str, str] = field(default_factory=dict)
    row: int = 0


@dataclass
class DatasetStats:
    """
    Counts per split, label histograms per split, and pairs dropped by filtering.
    """

    counts: dict[str, int] = field(default_factory=dict)
    histograms: dict[str, dict[str, int]] = field(default_factory=dict)
    dropped: dict[str, int] = field(default_factory=dict)


@dataclass
class NliDataset:
    """A labeled dataset with its splits, stats and content digest."""

    name: str
    scheme: LabelScheme
    splits: dict[str, list[NLIExample]]
    stats: DatasetStats
    digest: str

    def split(self, name: str) -> list[NLIExample]:
        if name not in self.splits or not self.splits[name]:
            raise InputError(f"dataset {self.name!r} has no {name!r} split")

        return self.splits[name]

    def test_splits(self) -> list[str]:
        """Every split named "test" or starting with "test_" (matched, mismatched)."""

        return [s for s in self.splits if s == "test" or s.startswith("test_")]


@dataclass(frozen=True)
class LengthProfile:
    count: int
    mean_length: float
    long_share: float
    max_length: int


def tokenize(line: str) -> list[str]:
    """
    Splits a pre-tokenized sentence on single spaces.

    Note:
        A blank line gives no tokens. Repeated, leading or trailing spaces would
        give empty tokens and raise a DataFormatError.

    Example:
        >>> tokenize("the cat sat")
        ['the', 'cat', 'sat']
    """

    if not line.strip():
        return []

    tokens = line.split(" ")
    if "" in tokens:
        raise DataFormatError(
            f"empty token at position {tokens.index('') + 1} in {line!r}"
        )

    return tokens


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as error:
        raise InputError(f"cannot read {path}: {error}") from error

    return digest.hexdigest()


def _read_text(path: PathLike) -> str:
    """
    Errors:
        InputError when the file cannot be read, DataFormatError naming the line
        when it is not valid UTF-8.
    """

    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as error:
        raise InputError(f"cannot read {path}: {error}") from error

    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as error:
        line = data[: error.start].count(b"\n") + 1
        raise DataFormatError(
            f"{path}: line {line} is not valid UTF-8 ({error.reason})"
        ) from error


def _read_lines(path: PathLike) -> list[str]:
    return _read_text(path).splitlines()


def _tokens(line: str, where: str) -> list[str]:
    try:
        return tokenize(line)
    except DataFormatError as error:
        raise DataFormatError(f"{where}: {error}") from None


def load_parallel(
    source_path: PathLike,
    target_path: PathLike,
    max_len: Optional[int],
    split: str = "train",
) -> tuple[list[ParallelExample], DatasetStats]:
    """
    Reads two aligned files, one whitespace-tokenized sentence per line.

    Note:
        With `max_len` set (training), pairs where either side is longer than
        `max_len` tokens are dropped. With `max_len` None (testing), every pair is kept.

    Args:
        source_path: Source-side sentences.
        target_path: Target-side sentences.
        max_len: Length limit in tokens, or None.
        split: Split name recorded in the stats.

    Returns:
        The kept pairs in file order, and stats with kept and dropped counts.

    Examples:
        A 51-token source with max_len=50 is dropped; exactly 50 is kept.
    """

    sources = _read_lines(source_path)
    targets = _read_lines(target_path)
    if len(sources) != len(targets):
        raise AlignmentError(
            f"{source_path} has {len(sources)} lines but "
            f"{target_path} has {len(targets)} lines"
        )

    examples: list[ParallelExample] = []
    dropped = 0
    for number, (source_line, target_line) in enumerate(zip(sources, targets), start=1):
        source = _tokens(source_line, f"{source_path}: line {number}")
        target = _tokens(target_line, f"{target_path}: line {number}")
        if not source or not target:
            empty = source_path if not source else target_path
            raise DataFormatError(f"{empty}: line {number} is empty")

        if max_len is not None and (len(source) > max_len or len(target) > max_len):
            dropped += 1
            continue

        examples.append(ParallelExample(source, target))

    total = len(sources)
    if max_len is not None and total and dropped / total > DROP_WARNING_SHARE:
        warnings.warn(
            f"length filter dropped {dropped} of {total} pairs from {source_path}",
            UserWarning,
        )

    logger.info(
        "loaded %d parallel pairs from %s (%d dropped)",
        len(examples),
        source_path,
        dropped,
    )

    stats = DatasetStats(counts={split: len(examples)}, dropped={split: dropped})

    return examples, stats


def build_vocab(
    sentences: Iterable[Sequence[str]],
    max_size: int = DEFAULT_VOCAB_SIZE,
) -> Vocabulary:
    """
    Keeps the (max_size − 4) most frequent tokens.

    Note:
        Ties in frequency break by lexicographic token order.

    Examples:
        >>> build_vocab([["a", "a", "a", "b", "b", "c"]], max_size=6).token_of[4:]
        ['a', 'b']
    """

    if max_size < len(RESERVED_TOKENS) + 1:
        raise ValidationError(f"max_size must be at least 5, got {max_size}")

    counts: Counter[str] = Counter()
    for sentence in sentences:
        counts.update(token for token in sentence if token not in RESERVED_TOKENS)

    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    kept = [token for token, _ in ranked[: max_size - len(RESERVED_TOKENS)]]

    logger.debug("vocabulary keeps %d of %d token types", len(kept), len(counts))

    return Vocabulary(RESERVED_TOKENS + kept, max_size)


def encode(
    sentence: Sequence[str],
    vocab: Vocabulary,
    add_boundaries: bool = False,
) -> list[int]:
    """
    Maps tokens to indices; unseen tokens become UNK.

    Examples:
        >>> encode([], build_vocab([["a"]], 5), add_boundaries=True)
        [2, 3]
    """

    ids = [vocab.id_of.get(token, UNK) for token in sentence]

    return [BOS] + ids + [EOS] if add_boundaries else ids


def decode(indices: Iterable[int], vocab: Vocabulary) -> list[str]:
    """Maps indices back to tokens, dropping PAD, BOS and EOS."""

    return [vocab.token_of[i] for i in indices if i not in (PAD, BOS, EOS)]


def _histogram(examples: Sequence[NLIExample], scheme: LabelScheme) -> dict[str, int]:
    counts = Counter(example.label for example in examples)

    return {label: counts.get(label, 0) for label in scheme.labels}


def compute_stats(
    splits: Mapping[str, Sequence[NLIExample]],
    scheme: LabelScheme,
) -> DatasetStats:
    return DatasetStats(
        counts={name: len(rows) for name, rows in splits.items()},
        histograms={name: _histogram(rows, scheme) for name, rows in splits.items()},
    )


def load_nli(
    path: PathLike,
    scheme: LabelScheme,
    split: str = "test",
) -> tuple[list[NLIExample], DatasetStats]:
    """
    Reads a headered TSV of context, hypothesis, label and optional meta columns.

    Note:
        A `split` column, when present, assigns rows to splits; otherwise every
        row belongs to `split`.

    Args:
        path: The TSV file.
        scheme: Labels every row must belong to.
        split: Split for files without a `split` column.

    Returns:
        Examples in file order, and per-split counts and label histograms.

    Examples:
        A row labeled "neutral" under the two-way scheme raises a LabelError
        naming the row.
    """

    text = io.StringIO(_read_text(path), newline="")
    rows = list(csv.reader(text, delimiter="\t", quoting=csv.QUOTE_NONE))

    if not rows:
        raise DataFormatError(f"{path}: missing header row")

    header = rows[0]
    missing = [column for column in NLI_REQUIRED_COLUMNS if column not in header]
    if missing:
        raise DataFormatError(f"{path}: missing mandatory column(s) {missing}")

    unknown = [c for c in header if c not in NLI_REQUIRED_COLUMNS + NLI_META_COLUMNS]
    if unknown:
        warnings.warn(f"{path}: ignoring unknown column(s) {unknown}", UserWarning)

    position = {column: header.index(column) for column in header}
    meta_columns = [column for column in NLI_META_COLUMNS if column in position]

    examples: list[NLIExample] = []
    for row_id, cells in enumerate(rows[1:]):
        number = row_id + 1
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}: row {number} has {len(cells)} fields, "
                f"header has {len(header)}"
            )

        label = cells[position["label"]]
        if label not in scheme:
            raise LabelError(
                f"{path}: row {number} has label {label!r}, "
                f"not in the {scheme.kind} scheme {scheme.labels}"
            )

        where = f"{path}: row {number}"
        context = _tokens(cells[position["context"]], where)
        hypothesis = _tokens(cells[position["hypothesis"]], where)
        if not context or not hypothesis:
            raise DataFormatError(f"{path}: row {number} has an empty sentence")

        meta = {column: cells[position[column]] for column in meta_columns}
        if "tag_match" in meta and meta["tag_match"] not in TAG_MATCH_VALUES:
            raise DataFormatError(
                f"{path}: row {number} has tag_match {meta['tag_match']!r}, "
                f"expected one of {TAG_MATCH_VALUES}"
            )
        meta.setdefault("split", split)

        examples.append(NLIExample(context, hypothesis, label, meta, row_id))

    splits: dict[str, list[NLIExample]] = {}
    for example in examples:
        splits.setdefault(example.meta["split"], []).append(example)

    stats = compute_stats(splits, scheme)
    logger.info("loaded %d NLI rows from %s: %s", len(examples), path, stats.counts)

    return examples, stats


def load_nli_dataset(
    name: str,
    paths: Union[PathLike, Mapping[str, PathLike]],
    scheme: LabelScheme,
) -> NliDataset:
    """
    Loads a dataset from one file with a `split` column, or one file per split.

    Args:
        name: Dataset id used in reports.
        paths: A single path, or a mapping of split name to path.
        scheme: The dataset's label scheme.

    Returns:
        An NliDataset whose digest covers every file read.
    """

    split_paths = (
        {"test": paths} if isinstance(paths, (str, Path)) else dict(paths)
    )

    splits: dict[str, list[NLIExample]] = {}
    digest = hashlib.sha256()
    for split_name, split_path in sorted(split_paths.items()):
        examples, _ = load_nli(split_path, scheme, split_name)
        digest.update(file_digest(split_path).encode("ascii"))
        for example in examples:
            splits.setdefault(example.meta["split"], []).append(example)

    return NliDataset(
        name=name,
        scheme=scheme,
        splits=splits,
        stats=compute_stats(splits, scheme),
        digest=digest.hexdigest(),
    )


def length_profile(
    examples: Sequence[NLIExample],
    threshold: int = LONG_SENTENCE_THRESHOLD,
) -> LengthProfile:
    """
    Context length summary: mean, share longer than `threshold`, maximum.
    """

    if not examples:
        return LengthProfile(0, 0.0, 0.0, 0)

    lengths = [len(example.context) for example in examples]

    return LengthProfile(
        count=len(lengths),
        mean_length=sum(lengths) / len(lengths),
        long_share=sum(1 for n in lengths if n > threshold) / len(lengths),
        max_length=max(lengths),
    )

"""
Fixed-size sentence vectors from encoder states, pair features, and SPRR1 dumps.
"""

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence, Union

import numpy as np

from nmtprobe.constants import DUMP_MAGIC, SCHEME_TAGS
from nmtprobe.errors import (
    ArtifactIOError,
    CompatibilityError,
    DataFormatError,
    InputError,
    ShapeError,
    ValidationError,
)
from nmtprobe.numerics.tensor import Array, no_grad
from nmtprobe.seq2seq.lstm import EncoderOutput
from nmtprobe.seq2seq.model import NmtModel, encode_batch, encoder_outputs

logger = logging.getLogger(__name__)

SCHEMES = Literal["concat_last", "maxpool"]
COMBINERS = Literal["concat", "infersent"]
PathLike = Union[str, Path]

# scheme tag, dim, count
_HEADER = struct.Struct("<III")


@dataclass(frozen=True)
class SentenceRep:
    vector: Array
    scheme: SCHEMES
    source_length: int

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class PairRep:
    vector: Array
    combiner: COMBINERS

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass
class RepresentationDump:
    """Sentence vectors in dataset order with the dataset row id of each."""

    vectors: Array
    scheme: SCHEMES
    row_ids: list[int]

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEME_TAGS:
        raise ValidationError(
            f"unknown representation scheme {scheme!r}, expected one of "
            f"{list(SCHEME_TAGS)}"
        )


def _check_combiner(combiner: str) -> None:
    if combiner not in ("concat", "infersent"):
        raise ValidationError(
            f"unknown combiner {combiner!r}, expected concat or infersent"
        )


def extract_concat_last(enc: EncoderOutput) -> SentenceRep:
    """
    [forward state at the last position ; backward state at the first position].

    Note:
        Both halves come from the top layer's hidden states, and each is the state
        its direction computed after reading the whole sentence.
    """

    if enc.sentence_length < 1:
        raise InputError("cannot extract a representation of an empty sentence")

    vector = np.concatenate([enc.top_forward[-1], enc.top_backward[0]])

    return SentenceRep(vector, "concat_last", enc.sentence_length)


def extract_maxpool(enc: EncoderOutput) -> SentenceRep:
    """Elementwise max over positions of the top layer's [forward ; backward] states."""

    if enc.sentence_length < 1:
        raise InputError("cannot extract a representation of an empty sentence")

    return SentenceRep(enc.top_states().max(axis=0), "maxpool", enc.sentence_length)


def extract(enc: EncoderOutput, scheme: SCHEMES) -> SentenceRep:
    _check_scheme(scheme)

    if scheme == "maxpool":
        return extract_maxpool(enc)

    return extract_concat_last(enc)


def _check_pair(v: SentenceRep, v_bar: SentenceRep) -> None:
    if v.dim != v_bar.dim:
        raise ShapeError(
            f"cannot combine vectors of dimension {v.dim} and {v_bar.dim}"
        )
    if v.scheme != v_bar.scheme:
        raise ShapeError(
            f"cannot combine a {v.scheme} vector with a {v_bar.scheme} one"
        )


def combine_concat(v: SentenceRep, v_bar: SentenceRep) -> PairRep:
    """
    [context ; hypothesis], dimension 4d.

    Args:
        v: The context representation.
        v_bar: The hypothesis representation.
    """

    _check_pair(v, v_bar)

    return PairRep(np.concatenate([v.vector, v_bar.vector]), "concat")


def combine_infersent(v: SentenceRep, v_bar: SentenceRep) -> PairRep:
    """
    [hyp ; ctx ; |hyp − ctx| ; hyp ⊙ ctx], dimension 8d.

    Args:
        v: The context representation.
        v_bar: The hypothesis representation.
    """

    _check_pair(v, v_bar)
    h, c = v_bar.vector, v.vector

    return PairRep(np.concatenate([h, c, np.abs(h - c), h * c]), "infersent")


def combine(v: SentenceRep, v_bar: SentenceRep, combiner: COMBINERS) -> PairRep:
    _check_combiner(combiner)

    if combiner == "infersent":
        return combine_infersent(v, v_bar)

    return combine_concat(v, v_bar)


def combine_matrix(contexts: Array, hypotheses: Array, combiner: COMBINERS) -> Array:
    """
    Row-wise `combine` over two (count, 2d) matrices.

    Returns:
        A (count, 4d) or (count, 8d) feature matrix.
    """

    _check_combiner(combiner)
    if contexts.shape != hypotheses.shape or contexts.ndim != 2:
        raise ShapeError(
            f"context vectors {contexts.shape} and hypothesis vectors "
            f"{hypotheses.shape} must be matching (count, dim) matrices"
        )

    if combiner == "concat":
        return np.concatenate([contexts, hypotheses], axis=1)

    return np.concatenate(
        [hypotheses, contexts, np.abs(hypotheses - contexts), hypotheses * contexts],
        axis=1,
    )


def extract_batch(
    model: NmtModel,
    sentences: Sequence[Sequence[int]],
    scheme: SCHEMES,
    batch_size: int = 64,
) -> Array:
    """
    Encodes sentences independently and extracts one vector each.

    Note:
        Sentences are encoded in padded batches of similar length; padding never
        reaches a real position's state, so the result matches one-at-a-time
        encoding up to float rounding.

    Returns:
        A float32 matrix of shape (len(sentences), 2d), in input order.
    """

    _check_scheme(scheme)
    width = 2 * model.config.d
    vectors = np.zeros((len(sentences), width), dtype=np.float32)
    order = sorted(range(len(sentences)), key=lambda i: len(sentences[i]))

    with no_grad():
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            encoded = encode_batch(model, [list(sentences[i]) for i in chunk])
            for i, enc in zip(chunk, encoder_outputs(encoded)):
                vectors[i] = extract(enc, scheme).vector

    logger.debug("extracted %d %s vectors of dimension %d", len(order), scheme, width)

    return vectors


def index_path(path: PathLike) -> Path:
    base = Path(path)

    return base.with_name(base.name + ".index")


def encode_dump(dump: RepresentationDump) -> bytes:
    count, dim = dump.vectors.shape
    header = DUMP_MAGIC + _HEADER.pack(SCHEME_TAGS[dump.scheme], dim, count)

    return header + np.ascontiguousarray(dump.vectors, dtype="<f4").tobytes()


def write_dump(path: PathLike, dump: RepresentationDump) -> str:
    """
    Writes the SPRR1 file and its index of row ids, one per line.

    Returns:
        The sha256 of the dump file.
    """

    if len(dump.row_ids) != dump.vectors.shape[0]:
        raise ShapeError(
            f"{len(dump.row_ids)} row ids for {dump.vectors.shape[0]} vectors"
        )

    blob = encode_dump(dump)
    try:
        Path(path).write_bytes(blob)
        index_path(path).write_text(
            "".join(f"{row}\n" for row in dump.row_ids), encoding="utf-8"
        )
    except OSError as error:
        raise ArtifactIOError(f"cannot write {path}: {error}") from error

    logger.info("wrote %d %s vectors to %s", len(dump.row_ids), dump.scheme, path)

    return hashlib.sha256(blob).hexdigest()


def read_dump(path: PathLike) -> RepresentationDump:
    try:
        blob = Path(path).read_bytes()
        index_lines = index_path(path).read_text(encoding="utf-8").split()
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error
    except UnicodeDecodeError as error:
        raise DataFormatError(f"{path}: index is not valid UTF-8") from error

    if not blob.startswith(DUMP_MAGIC):
        raise CompatibilityError(f"{path}: not an SPRR1 representation dump")

    offset = len(DUMP_MAGIC)
    if len(blob) < offset + _HEADER.size:
        raise DataFormatError(f"{path}: truncated header")

    tag, dim, count = _HEADER.unpack_from(blob, offset)
    schemes = {value: name for name, value in SCHEME_TAGS.items()}
    if tag not in schemes:
        raise CompatibilityError(f"{path}: unknown scheme tag {tag}")

    body = blob[offset + _HEADER.size :]
    if len(body) != 4 * dim * count:
        raise DataFormatError(
            f"{path}: header promises {count} × {dim} floats, body holds "
            f"{len(body) // 4}"
        )
    if len(index_lines) != count:
        raise DataFormatError(
            f"{index_path(path)} lists {len(index_lines)} rows, dump holds {count}"
        )

    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float32)

    return RepresentationDump(
        vectors=vectors,
        scheme=schemes[tag],  # type: ignore[arg-type]
        row_ids=[int(row) for row in index_lines],
    )


def cache_key(
    checkpoint_digest: str,
    dataset_digest: str,
    scheme: str,
    *extra: str,
) -> str:
    """
    Content key of a dump: checkpoint, dataset, scheme, then split and side names.

    Example:
        >>> len(cache_key("a", "b", "maxpool"))
        64
    """

    digest = hashlib.sha256()
    for part in (checkpoint_digest, dataset_digest, scheme, *extra):
        digest.update(part.encode("utf-8"))
        digest.update(b"\0")

    return digest.hexdigest()

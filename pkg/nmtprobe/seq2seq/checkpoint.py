"""
Checkpoint files: an SPRB1 parameter container plus sidecars.

    model.sprb          parameters
    model.sprb.config   [nmt] key=value: NmtConfig, seed, step, dev metric, digests
    model.sprb.src      source vocabulary, one token per line
    model.sprb.tgt      target vocabulary
"""

import hashlib
import logging
from pathlib import Path
from typing import Union

from nmtprobe.corpora import Vocabulary
from nmtprobe.errors import ArtifactIOError, CompatibilityError
from nmtprobe.numerics.container import decode_parameters, encode_parameters
from nmtprobe.records import read_record, write_record
from nmtprobe.seq2seq.model import NmtConfig
from nmtprobe.seq2seq.training import Checkpoint

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def sidecar_paths(path: PathLike) -> dict[str, Path]:
    base = Path(path)

    return {
        "config": base.with_name(base.name + ".config"),
        "src": base.with_name(base.name + ".src"),
        "tgt": base.with_name(base.name + ".tgt"),
    }


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> str:
    """
    Writes the checkpoint and its sidecars.

    Returns:
        The sha256 of the parameter container, used as the checkpoint's cache key.
    """

    blob = encode_parameters(checkpoint.params)
    try:
        Path(path).write_bytes(blob)
    except OSError as error:
        raise ArtifactIOError(f"cannot write {path}: {error}") from error

    sidecars = sidecar_paths(path)
    checkpoint.src_vocab.save(sidecars["src"])
    checkpoint.tgt_vocab.save(sidecars["tgt"])

    record: dict[str, object] = dict(checkpoint.config.to_record())
    record.update(
        seed=checkpoint.seed,
        step=checkpoint.step,
        dev_metric=repr(checkpoint.dev_metric),
        dev_metric_name="perplexity",
        src_vocab_digest=checkpoint.src_vocab.digest(),
        tgt_vocab_digest=checkpoint.tgt_vocab.digest(),
    )
    write_record(sidecars["config"], "nmt", record)

    digest = hashlib.sha256(blob).hexdigest()
    logger.info("wrote checkpoint %s (%s)", path, digest[:12])

    return digest


def load_checkpoint(path: PathLike) -> tuple[Checkpoint, str]:
    """
    Reads a checkpoint and checks its vocabularies against the parameters.

    Returns:
        The checkpoint and the sha256 of its parameter container.

    Errors:
        CompatibilityError when a vocabulary file does not match the sidecar
        digest or the embedding table it should index.
    """

    try:
        blob = Path(path).read_bytes()
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error

    params = decode_parameters(blob, str(path))
    sidecars = sidecar_paths(path)
    record = read_record(sidecars["config"], "nmt")
    config = NmtConfig.from_record(record)

    vocabs = {}
    for side, key in (("src", "src_embed"), ("tgt", "tgt_embed")):
        vocab = Vocabulary.load(sidecars[side])
        if vocab.digest() != record.get(f"{side}_vocab_digest"):
            raise CompatibilityError(
                f"{sidecars[side]} does not match the vocabulary "
                f"{path} was trained with"
            )
        if key in params and params[key].shape[0] != len(vocab):
            raise CompatibilityError(
                f"{sidecars[side]} has {len(vocab)} tokens but {key} has "
                f"{params[key].shape[0]} rows"
            )
        vocabs[side] = vocab

    checkpoint = Checkpoint(
        params=params,
        config=config,
        dev_metric=float(record["dev_metric"]),
        step=int(record["step"]),
        seed=int(record["seed"]),
        src_vocab=vocabs["src"],
        tgt_vocab=vocabs["tgt"],
    )

    return checkpoint, hashlib.sha256(blob).hexdigest()

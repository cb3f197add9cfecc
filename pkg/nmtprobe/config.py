"""
Run configuration: a sectioned key=value file plus command-line overrides.

    [run]                seed, profile
    [paths]              out
    [nmt]                NmtConfig fields and vocab_size, over the profile
    [probe]              ProbeConfig fields
    [representation]     scheme, combiner, compare_combiners
    [encoder:<id>]       train_source, train_target, dev_source, dev_target
                         or checkpoint
    [dataset:<id>]       scheme, then path (one file with a split column) or
                         one key per split
    [matrix]             encoders, datasets (comma-separated ids)
    [external_baselines] free-form name = value lines, copied into reports

Relative paths are resolved against the config file's directory.
"""

import configparser
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Optional, Union

from nmtprobe.constants import PROFILES_TABLE
from nmtprobe.corpora import SCHEME_KINDS, label_scheme
from nmtprobe.errors import ValidationError
from nmtprobe.probe import ProbeConfig
from nmtprobe.representations import COMBINERS, SCHEMES
from nmtprobe.seq2seq.model import NmtConfig

logger = logging.getLogger(__name__)

PROFILES = Literal["desk", "paper"]
PathLike = Union[str, Path]

# command-line flag -> (section, key)
OVERRIDE_KEYS = {
    "seed": ("run", "seed"),
    "profile": ("run", "profile"),
    "out": ("paths", "out"),
    "scheme": ("representation", "scheme"),
    "combiner": ("representation", "combiner"),
    "probe": ("probe", "kind"),
}

ENCODER_CORPUS_KEYS = ["train_source", "train_target", "dev_source", "dev_target"]


@dataclass(frozen=True)
class EncoderSpec:
    """Where an encoder comes from: parallel corpora to train on, or a checkpoint."""

    name: str
    corpora: dict[str, Path] = field(default_factory=dict)
    checkpoint: Optional[Path] = None

    def paths(self) -> list[Path]:
        return [self.checkpoint] if self.checkpoint else list(self.corpora.values())


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    scheme: SCHEME_KINDS
    files: dict[str, Path]

    def source(self) -> Union[Path, dict[str, Path]]:
        """A single path for a one-file dataset, else split name to path."""

        if list(self.files) == ["path"]:
            return self.files["path"]

        return dict(self.files)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    profile: PROFILES
    out_dir: Path
    vocab_size: int
    nmt: dict[str, str]
    probe: ProbeConfig
    scheme: SCHEMES
    combiner: COMBINERS
    compare_combiners: bool
    encoders: dict[str, EncoderSpec]
    datasets: dict[str, DatasetSpec]
    matrix_encoders: list[str]
    matrix_datasets: list[str]
    external_baselines: dict[str, str]
    digest: str

    def nmt_config(self, src_vocab_size: int, tgt_vocab_size: int) -> NmtConfig:
        """The profile's sizes with `[nmt]` keys applied on top."""

        record = {
            key: str(value)
            for key, value in PROFILES_TABLE[self.profile].items()
            if key != "vocab_size"
        }
        record.update(self.nmt)
        record["src_vocab_size"] = str(src_vocab_size)
        record["tgt_vocab_size"] = str(tgt_vocab_size)

        return NmtConfig.from_record(record)

    def encoder(self, name: str) -> EncoderSpec:
        if name not in self.encoders:
            raise ValidationError(
                f"unknown encoder {name!r}; declared: {sorted(self.encoders)}"
            )
        return self.encoders[name]

    def dataset(self, name: str) -> DatasetSpec:
        if name not in self.datasets:
            raise ValidationError(
                f"unknown dataset {name!r}; declared: {sorted(self.datasets)}"
            )
        return self.datasets[name]

    def validate(self) -> None:
        """
        Checks everything that can be checked without computing: paths exist,
        values are in range and the matrix names declared ids.

        Errors:
            ValidationError naming the first problem found.
        """

        self.nmt_config(self.vocab_size, self.vocab_size)

        for spec in self.encoders.values():
            if spec.checkpoint is None:
                missing = [k for k in ENCODER_CORPUS_KEYS if k not in spec.corpora]
                if missing:
                    raise ValidationError(
                        f"encoder {spec.name!r} needs {missing} or a checkpoint"
                    )
            for path in spec.paths():
                if not path.exists():
                    raise ValidationError(
                        f"encoder {spec.name!r}: {path} does not exist"
                    )

        for dataset in self.datasets.values():
            for path in dataset.files.values():
                if not path.exists():
                    raise ValidationError(
                        f"dataset {dataset.name!r}: {path} does not exist"
                    )

        for name in self.matrix_encoders:
            self.encoder(name)
        for name in self.matrix_datasets:
            self.dataset(name)

    def settings(self) -> dict[str, str]:
        """Flat echo of the effective settings for reports and manifests."""

        echo = {
            "profile": self.profile,
            "vocab_size": str(self.vocab_size),
            "scheme": self.scheme,
            "combiner": self.combiner,
            "compare_combiners": str(self.compare_combiners),
        }
        echo.update({f"nmt.{k}": v for k, v in sorted(self.nmt.items())})
        echo.update({f"probe.{k}": v for k, v in self.probe.to_record().items()})

        return echo


def _section(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(parser[name]) if parser.has_section(name) else {}


def _split_ids(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _resolve(base: Path, raw: str) -> Path:
    path = Path(raw).expanduser()

    return path if path.is_absolute() else base / path


def _int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(
            f"[{section}] {key} must be an integer, got {raw!r}"
        ) from None


def parse_run_config(
    text: str,
    base: Path,
    overrides: Optional[Mapping[str, Optional[str]]] = None,
) -> RunConfig:
    """
    Builds a RunConfig from config text.

    Args:
        text: The INI-style config.
        base: Directory relative paths are resolved against.
        overrides: Flag name to value; None values are ignored.

    Returns:
        The config. Call `validate()` before computing anything.
    """

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text)
    except configparser.Error as error:
        raise ValidationError(f"cannot parse config: {error}") from error

    for flag, value in (overrides or {}).items():
        if value is None:
            continue
        if flag not in OVERRIDE_KEYS:
            raise ValidationError(f"unknown override {flag!r}")
        section, key = OVERRIDE_KEYS[flag]
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][key] = str(value)

    run = _section(parser, "run")
    if "seed" not in run:
        raise ValidationError("[run] seed is mandatory")
    seed = _int("run", "seed", run["seed"])
    if seed < 0:
        raise ValidationError(f"[run] seed must be non-negative, got {seed}")

    profile = run.get("profile", "desk")
    if profile not in PROFILES_TABLE:
        raise ValidationError(
            f"unknown profile {profile!r}, expected one of {list(PROFILES_TABLE)}"
        )

    paths = _section(parser, "paths")
    out_dir = _resolve(base, paths.get("out", "runs"))

    nmt = _section(parser, "nmt")
    vocab_size = _int(
        "nmt",
        "vocab_size",
        nmt.pop("vocab_size", str(PROFILES_TABLE[profile]["vocab_size"])),
    )
    if vocab_size < 5:
        raise ValidationError(f"[nmt] vocab_size must be at least 5, got {vocab_size}")

    probe_record = _section(parser, "probe")
    probe_record.setdefault("seed", str(seed))
    probe = ProbeConfig.from_record(probe_record)

    representation = _section(parser, "representation")
    scheme = representation.get("scheme", "concat_last")
    combiner = representation.get("combiner", "concat")
    if scheme not in ("concat_last", "maxpool"):
        raise ValidationError(f"unknown representation scheme {scheme!r}")
    if combiner not in ("concat", "infersent"):
        raise ValidationError(f"unknown combiner {combiner!r}")
    compare = representation.get("compare_combiners", "false").lower() == "true"

    encoders: dict[str, EncoderSpec] = {}
    datasets: dict[str, DatasetSpec] = {}
    for section in parser.sections():
        kind, _, name = section.partition(":")
        values = parser[section]
        if kind == "encoder" and name:
            checkpoint = values.get("checkpoint")
            encoders[name] = EncoderSpec(
                name=name,
                corpora={
                    key: _resolve(base, values[key])
                    for key in ENCODER_CORPUS_KEYS
                    if key in values
                },
                checkpoint=_resolve(base, checkpoint) if checkpoint else None,
            )
        elif kind == "dataset" and name:
            if "scheme" not in values:
                raise ValidationError(f"[{section}] needs a scheme")
            files = {
                key: _resolve(base, value)
                for key, value in values.items()
                if key != "scheme"
            }
            if not files:
                raise ValidationError(f"[{section}] names no files")
            datasets[name] = DatasetSpec(
                name, label_scheme(values["scheme"]).kind, files
            )

    matrix = _section(parser, "matrix")
    external = _section(parser, "external_baselines")

    buffer = "\n".join(
        f"[{section}]\n" + "\n".join(f"{k}={v}" for k, v in parser[section].items())
        for section in parser.sections()
    )

    return RunConfig(
        seed=seed,
        profile=profile,  # type: ignore[arg-type]
        out_dir=out_dir,
        vocab_size=vocab_size,
        nmt=nmt,
        probe=probe,
        scheme=scheme,  # type: ignore[arg-type]
        combiner=combiner,  # type: ignore[arg-type]
        compare_combiners=compare,
        encoders=encoders,
        datasets=datasets,
        matrix_encoders=_split_ids(matrix.get("encoders", ",".join(encoders))),
        matrix_datasets=_split_ids(matrix.get("datasets", ",".join(datasets))),
        external_baselines=external,
        digest=hashlib.sha256(buffer.encode("utf-8")).hexdigest(),
    )


def load_run_config(
    path: PathLike,
    overrides: Optional[Mapping[str, Optional[str]]] = None,
) -> RunConfig:
    """
    Reads and parses a config file; CLI flag values in `overrides` win.
    """

    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as error:
        raise ValidationError(f"cannot read config {config_path}: {error}") from error
    except UnicodeDecodeError as error:
        raise ValidationError(
            f"config {config_path} is not valid UTF-8 ({error.reason})"
        ) from error

    config = parse_run_config(text, config_path.resolve().parent, overrides)
    logger.debug("loaded config %s (%s)", config_path, config.digest[:12])

    return config

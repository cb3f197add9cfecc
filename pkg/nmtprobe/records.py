"""
Single-section key=value sidecar files, in the same format as run configs.
"""

import configparser
import io
from dataclasses import fields
from pathlib import Path
from typing import Mapping, TypeVar, Union

from nmtprobe.errors import ArtifactIOError, DataFormatError, ValidationError

T = TypeVar("T")


def dumps_record(section: str, record: Mapping[str, object]) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    parser[section] = {key: str(value) for key, value in record.items()}

    buffer = io.StringIO()
    parser.write(buffer)

    return buffer.getvalue()


def write_record(
    path: Union[str, Path],
    section: str,
    record: Mapping[str, object],
) -> None:
    """
    Writes `record` under `[section]`, one `key = value` per line in record order.
    """

    try:
        Path(path).write_text(dumps_record(section, record), encoding="utf-8")
    except OSError as error:
        raise ArtifactIOError(f"cannot write {path}: {error}") from error


def read_record(path: Union[str, Path], section: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]

    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error
    except (configparser.Error, UnicodeDecodeError) as error:
        raise DataFormatError(f"{path}: {error}") from error

    if not parser.has_section(section):
        raise DataFormatError(f"{path}: missing [{section}] section")

    return dict(parser[section])


def dataclass_record(instance: object) -> dict[str, str]:
    """Flattens a dataclass of scalar fields to strings, in field order."""

    return {
        spec.name: str(getattr(instance, spec.name))
        for spec in fields(instance)  # type: ignore[arg-type]
    }


def from_dataclass_record(cls: type[T], record: Mapping[str, str]) -> T:
    """
    Builds `cls` from a record, converting by each field's annotation.

    Note:
        Keys the record lacks fall back to the field defaults. Unknown keys are
        ignored so sidecars can carry provenance next to the fields.
    """

    values: dict[str, object] = {}
    for spec in fields(cls):  # type: ignore[arg-type]
        if spec.name not in record:
            continue
        raw = record[spec.name]
        try:
            if spec.type in (bool, "bool"):
                if raw not in ("True", "False", "true", "false"):
                    raise ValueError(f"expected true or false, got {raw!r}")
                values[spec.name] = raw.lower() == "true"
            elif spec.type in (int, "int"):
                values[spec.name] = int(raw)
            elif spec.type in (float, "float"):
                values[spec.name] = float(raw)
            else:
                values[spec.name] = raw
        except ValueError as error:
            raise ValidationError(f"{spec.name}: {error}") from None

    return cls(**values)

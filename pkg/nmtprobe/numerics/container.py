"""
The SPRB1 parameter container.

Layout, all integers little-endian uint32:

    b"SPRB1" | count | count × entry
    entry = name_len | name utf-8 | rank | rank × dim | float32 values
"""

import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from nmtprobe.constants import CHECKPOINT_MAGIC
from nmtprobe.errors import ArtifactIOError, CompatibilityError, DataFormatError
from nmtprobe.numerics.tensor import Array

_UINT = struct.Struct("<I")


def encode_parameters(params: Mapping[str, Array]) -> bytes:
    chunks = [CHECKPOINT_MAGIC, _UINT.pack(len(params))]

    for name, values in params.items():
        encoded = name.encode("utf-8")
        chunks.append(_UINT.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_UINT.pack(values.ndim))
        chunks.extend(_UINT.pack(dim) for dim in values.shape)
        chunks.append(np.ascontiguousarray(values, dtype="<f4").tobytes())

    return b"".join(chunks)


def decode_parameters(blob: bytes, source: str = "<bytes>") -> dict[str, Array]:
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CompatibilityError(f"{source}: not an SPRB1 parameter container")

    offset = len(CHECKPOINT_MAGIC)

    def read_uint() -> int:
        nonlocal offset
        if offset + _UINT.size > len(blob):
            raise DataFormatError(f"{source}: truncated at byte {offset}")
        (value,) = _UINT.unpack_from(blob, offset)
        offset += _UINT.size
        return int(value)

    params: dict[str, Array] = {}
    for _ in range(read_uint()):
        name_len = read_uint()
        try:
            name = blob[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError(
                f"{source}: parameter name at byte {offset} is not UTF-8"
            ) from None
        offset += name_len
        shape = tuple(read_uint() for _ in range(read_uint()))
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(blob):
            raise DataFormatError(f"{source}: parameter {name!r} is truncated")
        params[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape)
        params[name] = params[name].astype(np.float32)
        offset = end

    if offset != len(blob):
        raise DataFormatError(f"{source}: {len(blob) - offset} trailing bytes")

    return params


def save_parameters(path: Union[str, Path], params: Mapping[str, Array]) -> None:
    try:
        Path(path).write_bytes(encode_parameters(params))
    except OSError as error:
        raise ArtifactIOError(f"cannot write {path}: {error}") from error


def load_parameters(path: Union[str, Path]) -> dict[str, Array]:
    try:
        blob = Path(path).read_bytes()
    except OSError as error:
        raise ArtifactIOError(f"cannot read {path}: {error}") from error

    return decode_parameters(blob, str(path))

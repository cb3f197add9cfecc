import numpy as np
import pytest
from numpy.testing import assert_array_equal

from nmtprobe.errors import CompatibilityError, DataFormatError
from nmtprobe.numerics.container import decode_parameters, encode_parameters


def test_encode_parameters_layout() -> None:
    blob = encode_parameters({"b": np.array([1.0, 2.0], dtype=np.float32)})

    assert blob[:5] == b"SPRB1"
    # count, name length, name, rank, dim, two float32 values
    assert len(blob) == 5 + 4 + 4 + 1 + 4 + 4 + 8


def test_decode_parameters_keeps_order_and_shapes() -> None:
    params = {
        "z": np.arange(6, dtype=np.float32).reshape(2, 3),
        "a": np.array([0.5], dtype=np.float32),
        "scalar": np.array(3.0, dtype=np.float32),
    }

    decoded = decode_parameters(encode_parameters(params))

    assert list(decoded) == ["z", "a", "scalar"]
    for name, values in params.items():
        assert_array_equal(decoded[name], values)
        assert decoded[name].dtype == np.float32


def test_decode_parameters_errors() -> None:
    blob = encode_parameters({"w": np.ones(4, dtype=np.float32)})

    with pytest.raises(CompatibilityError):
        decode_parameters(b"SPRR1" + blob[5:])

    with pytest.raises(DataFormatError, match="truncated"):
        decode_parameters(blob[:-3])

    with pytest.raises(DataFormatError, match="trailing"):
        decode_parameters(blob + b"\0")

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geoflow.errors import FormatError
from geoflow.matio import (
    decode_matrix,
    encode_matrix,
    read_matrix,
    read_sidecar,
    write_matrix,
    write_sidecar,
)


def test_header_layout():
    buf = encode_matrix(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert buf[:4] == b"GFKM"
    version, rows, cols = struct.unpack("<IQQ", buf[4:24])
    assert (version, rows, cols) == (1, 2, 3)
    # little-endian doubles, row-major
    assert struct.unpack("<6d", buf[24:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_round_trip(mat):
    np.testing.assert_array_equal(decode_matrix(encode_matrix(mat)), mat)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
    lambda b: b[:-1],
    lambda b: b[:10],
])
def test_rejects_corrupt_buffers(mutate):
    buf = encode_matrix(np.eye(2))
    with pytest.raises(FormatError):
        decode_matrix(mutate(buf))


def test_rejects_non_finite():
    with pytest.raises(FormatError):
        encode_matrix(np.array([[np.nan]]))


def test_file_and_sidecar(tmp_path):
    path = tmp_path / "sub" / "m.gfkm"
    write_matrix(path, np.arange(6.0).reshape(2, 3))
    write_sidecar(path, {"seed": 3, "command": "geoflow x"})
    np.testing.assert_array_equal(read_matrix(path), np.arange(6.0).reshape(2, 3))
    assert read_sidecar(path) == {"seed": 3, "command": "geoflow x"}
    # no temp files left behind by the atomic writer
    assert sorted(p.name for p in path.parent.iterdir()) == ["m.gfkm", "m.gfkm.json"]


def test_missing_sidecar_is_empty(tmp_path):
    assert read_sidecar(tmp_path / "none.gfkm") == {}

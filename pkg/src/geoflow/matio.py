"""GFKM binary matrix files and atomic artifact writes.

Layout (little-endian)::

    b"GFKM" | u32 version=1 | u64 rows | u64 cols | rows*cols f64, row-major
"""
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"GFKM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def encode_matrix(mat):
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2:
        raise FormatError(f"expected a 2-D matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise FormatError("matrix contains non-finite entries")
    rows, cols = mat.shape
    body = np.ascontiguousarray(mat, dtype="<f8").tobytes()
    return _HEADER.pack(MAGIC, VERSION, rows, cols) + body


def decode_matrix(buf):
    if len(buf) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(buf) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return data.astype(np.float64).reshape(rows, cols)


def atomic_write_bytes(path, data):
    """Write to a temp file in the destination directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_matrix(path, mat):
    atomic_write_bytes(path, encode_matrix(mat))


def read_matrix(path):
    return decode_matrix(Path(path).read_bytes())


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    atomic_write_text(sidecar_path(path), text)


def read_sidecar(path):
    p = sidecar_path(path)
    if not p.exists():
        return {}
    return json.loads(p.read_text())

"""Binary matrix files: magic "C3MM", version u32, rows u64, cols u64, f64 row-major."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError

MAGIC = b"C3MM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def write_matrix(path: str | Path, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(np.asarray(mat, dtype=np.float64))
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    if mat.ndim != 2:
        raise ConfigError(f"expected a 1-D or 2-D array, got ndim={mat.ndim}")
    if not np.all(np.isfinite(mat)):
        raise NumericError(f"refusing to write non-finite matrix to {path}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mat.shape[0], mat.shape[1]))
        fh.write(mat.tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ConfigError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported version {version}")
        payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ConfigError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()

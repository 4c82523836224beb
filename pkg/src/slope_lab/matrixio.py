"""Binary and CSV matrix files shared by the CLI subcommands.

Binary layout: a 16-byte header (8-byte magic ``SLOPELAB``, uint32 n,
uint32 p, little endian) followed by n*p little-endian float64 values in
row-major order.  Vectors are stored as n-by-1 matrices.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SLOPELAB"
_HEADER = struct.Struct("<8sII")

__all__ = ["write_matrix", "read_matrix", "read_vector"]


def write_matrix(path, M, fmt: str = "bin") -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())
    elif fmt == "csv":
        np.savetxt(path, M, delimiter=",")
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def read_matrix(path) -> np.ndarray:
    """Read a matrix, sniffing binary (magic header) versus text."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) == _HEADER.size and head[:8] == MAGIC:
            _, n, p = _HEADER.unpack(head)
            data = np.frombuffer(fh.read(8 * n * p), dtype="<f8")
            if data.size != n * p:
                raise ValueError(f"truncated matrix file {path}")
            return data.reshape(n, p).astype(np.float64)
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(M, dtype=np.float64)


def read_vector(path) -> np.ndarray:
    M = read_matrix(path)
    if 1 not in M.shape and M.ndim == 2 and min(M.shape) != 1:
        raise ValueError(f"{path} holds a matrix, expected a vector")
    return M.reshape(-1)

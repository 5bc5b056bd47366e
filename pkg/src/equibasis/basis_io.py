"""EQB1 binary basis files.

Layout (all integers little-endian)::

    b"EQB1"            4-byte magic
    u8                 field tag: 0 = real, 1 = complex
    u64                dim
    u64                rank
    dim*rank scalars   column-major float64 (complex: interleaved re, im)
    u64                key length in bytes
    utf-8              canonical key
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BasisFormatError

MAGIC = b"EQB1"


def encode_basis(Q: np.ndarray, key: str) -> bytes:
    Q = np.asarray(Q)
    if Q.ndim != 2:
        raise ValueError("basis must be a 2D array")
    complex_ = np.iscomplexobj(Q)
    dim, rank = Q.shape
    dtype = "<c16" if complex_ else "<f8"
    body = np.asarray(Q, dtype=dtype).tobytes(order="F")
    k = key.encode("utf-8")
    return MAGIC + struct.pack("<BQQ", int(complex_), dim, rank) + body + struct.pack("<Q", len(k)) + k


def decode_basis(data: bytes) -> tuple[np.ndarray, str]:
    if len(data) < 21 or data[:4] != MAGIC:
        raise BasisFormatError("not an EQB1 file")
    tag, dim, rank = struct.unpack_from("<BQQ", data, 4)
    if tag not in (0, 1):
        raise BasisFormatError(f"unknown field tag {tag}")
    width = 16 if tag else 8
    start = 21
    end = start + dim * rank * width
    if len(data) < end + 8:
        raise BasisFormatError("truncated EQB1 payload")
    Q = np.frombuffer(data[start:end], dtype="<c16" if tag else "<f8").reshape((dim, rank), order="F")
    (klen,) = struct.unpack_from("<Q", data, end)
    kbytes = data[end + 8 : end + 8 + klen]
    if len(kbytes) != klen or len(data) != end + 8 + klen:
        raise BasisFormatError("bad key section")
    return Q.astype(np.complex128 if tag else np.float64), kbytes.decode("utf-8")


def write_basis(path, Q: np.ndarray, key: str) -> None:
    Path(path).write_bytes(encode_basis(Q, key))


def read_basis(path) -> tuple[np.ndarray, str]:
    return decode_basis(Path(path).read_bytes())

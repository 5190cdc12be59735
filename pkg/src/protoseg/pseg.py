"""Reader and writer for the PSEG binary tensor container.

Layout (all integers little-endian)::

    b"PSEG"  kind:u8  version:u16
    kind F/M:  rank:u8  dims:u32*rank  payload
    kind W:    count:u16  then per tensor:
               name_len:u8  name:utf-8  rank:u8  dims:u32*rank  f64 payload

Kind ``F`` stores float64 values (feature maps and raw image rasters),
kind ``M`` stores uint16 labels (masks), kind ``W`` stores a named list of
float64 tensors (embedder checkpoints). Payloads are row-major.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError, IoError

MAGIC = b"PSEG"
VERSION = 1
KIND_FEATURE = b"F"
KIND_MASK = b"M"
KIND_WEIGHTS = b"W"

_DTYPES = {KIND_FEATURE: np.dtype("<f8"), KIND_MASK: np.dtype("<u2"), KIND_WEIGHTS: np.dtype("<f8")}


def _tensor_block(arr: np.ndarray, dtype: np.dtype) -> bytes:
    if arr.ndim > 255:
        raise FormatError("rank exceeds 255")
    head = struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dtype).tobytes()


def encode(arr, kind: bytes) -> bytes:
    arr = np.asarray(arr)
    if kind == KIND_MASK:
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise FormatError("mask labels must fit in uint16")
    elif kind != KIND_FEATURE:
        raise FormatError(f"unknown kind {kind!r}")
    return MAGIC + kind + struct.pack("<H", VERSION) + _tensor_block(arr, _DTYPES[kind])


def encode_weights(named: dict) -> bytes:
    parts = [MAGIC, KIND_WEIGHTS, struct.pack("<HH", VERSION, len(named))]
    for name, arr in named.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<B", len(raw)) + raw)
        parts.append(_tensor_block(np.asarray(arr), _DTYPES[KIND_WEIGHTS]))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated while reading {what}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def tensor(self, dtype: np.dtype) -> np.ndarray:
        (rank,) = self.unpack("<B", "rank")
        dims = self.unpack(f"<{rank}I", "dims")
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = self.take(count * dtype.itemsize, "payload")
        return np.frombuffer(raw, dtype=dtype).reshape(dims).copy()


def _header(r: _Reader, expected: bytes) -> None:
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    kind = r.take(1, "kind")
    if kind != expected:
        raise FormatError(f"expected kind {expected!r}, found {kind!r}", 4)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 5)


def decode(buf: bytes, kind: bytes) -> np.ndarray:
    r = _Reader(buf)
    _header(r, kind)
    arr = r.tensor(_DTYPES[kind])
    if r.pos != len(buf):
        raise FormatError("trailing bytes", r.pos)
    if kind == KIND_FEATURE:
        arr = arr.astype(np.float64)
    else:
        arr = arr.astype(np.int64)
    return arr


def decode_weights(buf: bytes) -> dict:
    r = _Reader(buf)
    _header(r, KIND_WEIGHTS)
    (count,) = r.unpack("<H", "tensor count")
    out = {}
    for _ in range(count):
        (n,) = r.unpack("<B", "name length")
        start = r.pos
        try:
            name = r.take(n, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not utf-8", start) from None
        out[name] = r.tensor(_DTYPES[KIND_WEIGHTS]).astype(np.float64)
    if r.pos != len(buf):
        raise FormatError("trailing bytes", r.pos)
    return out


def _write(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def save_feature_map(f, path) -> None:
    _write(path, encode(f, KIND_FEATURE))


def load_feature_map(path) -> np.ndarray:
    return decode(_read(path), KIND_FEATURE)


def save_mask(m, path) -> None:
    _write(path, encode(m, KIND_MASK))


def load_mask(path) -> np.ndarray:
    return decode(_read(path), KIND_MASK)


def save_weights(named: dict, path) -> None:
    _write(path, encode_weights(named))


def load_weights(path) -> dict:
    return decode_weights(_read(path))

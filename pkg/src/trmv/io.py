"""
Binary tensor and mask files.

Tensor file (``.tnsr``), all little-endian::

    b"TNSR" | version u16 | order u32 | shape u64 * order | data f64 * prod(shape)

Mask file (``.mask``)::

    b"MASK" | version u16 | order u32 | shape u64 * order | count u64 | index u64 * count

Data are written in row-major linearization; mask indices are sorted linear
indices under the same linearization.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import ObservationMask, as_tensor

__all__ = [
    "FORMAT_VERSION",
    "FormatError",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "save_tensor",
    "load_tensor",
    "mask_to_bytes",
    "mask_from_bytes",
    "save_mask",
    "load_mask",
]

FORMAT_VERSION = 1
_TENSOR_MAGIC = b"TNSR"
_MASK_MAGIC = b"MASK"


class FormatError(ValueError):
    """Raised when a tensor or mask file is malformed."""


def _header(magic: bytes, shape) -> bytes:
    return magic + struct.pack("<HI", FORMAT_VERSION, len(shape)) + struct.pack(
        f"<{len(shape)}Q", *shape
    )


def _read_header(buf: bytes, magic: bytes):
    if len(buf) < 10 or buf[:4] != magic:
        raise FormatError(f"bad magic, expected {magic!r}")
    version, order = struct.unpack_from("<HI", buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    end = 10 + 8 * order
    if len(buf) < end:
        raise FormatError("truncated header")
    shape = struct.unpack_from(f"<{order}Q", buf, 10)
    return tuple(int(s) for s in shape), end


def tensor_to_bytes(T) -> bytes:
    T = as_tensor(T)
    return _header(_TENSOR_MAGIC, T.shape) + np.ascontiguousarray(T, dtype="<f8").tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    shape, offset = _read_header(buf, _TENSOR_MAGIC)
    n = int(np.prod(shape))
    if len(buf) != offset + 8 * n:
        raise FormatError(f"expected {n} values, file has {(len(buf) - offset) / 8:g}")
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=offset)
    return data.astype(np.float64).reshape(shape)


def mask_to_bytes(mask: ObservationMask) -> bytes:
    idx = np.asarray(mask.observed, dtype="<u8")
    return _header(_MASK_MAGIC, mask.shape) + struct.pack("<Q", idx.size) + idx.tobytes()


def mask_from_bytes(buf: bytes) -> ObservationMask:
    shape, offset = _read_header(buf, _MASK_MAGIC)
    if len(buf) < offset + 8:
        raise FormatError("truncated mask count")
    (count,) = struct.unpack_from("<Q", buf, offset)
    offset += 8
    if len(buf) != offset + 8 * count:
        raise FormatError("mask length does not match its count")
    idx = np.frombuffer(buf, dtype="<u8", count=count, offset=offset).astype(np.int64)
    try:
        return ObservationMask(shape, idx)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def save_tensor(path, T) -> None:
    Path(path).write_bytes(tensor_to_bytes(T))


def load_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def save_mask(path, mask: ObservationMask) -> None:
    Path(path).write_bytes(mask_to_bytes(mask))


def load_mask(path) -> ObservationMask:
    return mask_from_bytes(Path(path).read_bytes())

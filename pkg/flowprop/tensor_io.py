"""
Binary tensor files used for fixtures and oracle cross-checks.

Layout (all little-endian):
    8 bytes   magic "FPTENSR1"
    3 x u32   H, W, C
    H*W*C f32 values, row-major, channel-last
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from flowprop.errors import ContractError, FormatError
from flowprop.tensors import FeatureMap

MAGIC = b"FPTENSR1"
HEADER = struct.Struct("<8sIII")
PAYLOAD_DTYPE = np.dtype("<f4")


def encode_tensor(data) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ValueError(f"expected an H x W x C array, got shape {arr.shape}")
    h, w, c = arr.shape
    with np.errstate(over="ignore", invalid="ignore"):
        payload = np.ascontiguousarray(arr, dtype=PAYLOAD_DTYPE)
        exact = np.array_equal(payload.astype(arr.dtype), arr)
    if not exact:
        raise ContractError(f"{arr.dtype} values are not exactly representable as float32; "
                            "cast the map to float32 before writing")
    payload = payload.tobytes()
    return HEADER.pack(MAGIC, h, w, c) + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < len(MAGIC):
        raise FormatError("truncated magic", len(blob))
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}", 0)
    if len(blob) < HEADER.size:
        raise FormatError("truncated header", len(blob))
    _, h, w, c = HEADER.unpack_from(blob, 0)
    expected = HEADER.size + h * w * c * PAYLOAD_DTYPE.itemsize
    if len(blob) < expected:
        raise FormatError(f"truncated payload: {h}x{w}x{c} needs {expected} bytes, file has {len(blob)}",
                          len(blob))
    if len(blob) > expected:
        raise FormatError(f"{len(blob) - expected} trailing bytes after payload", expected)
    values = np.frombuffer(blob, dtype=PAYLOAD_DTYPE, count=h * w * c, offset=HEADER.size)
    return values.reshape(h, w, c).astype(np.float32)


def tensor_io_write(tensor, path):
    """
    Write any grid container (FeatureMap, FlowField, ScaleMap) or raw H x W x C array.
    Values must survive a float32 round trip exactly, otherwise ContractError.
    """
    data = getattr(tensor, "data", tensor)
    path = Path(path)
    path.write_bytes(encode_tensor(data))
    return path


def tensor_io_read(path) -> FeatureMap:
    return FeatureMap(decode_tensor(Path(path).read_bytes()))

"""
Named-array container used for guide and student checkpoints.

Layout (little-endian): magic "NAC1", u32 metadata length, UTF-8 YAML
metadata, u32 array count, then per array: u16 name length, name bytes,
u8 ndim, ndim x u32 dims, f64 data in row-major order.
"""

import io
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
import yaml

from .errors import CheckpointError

MAGIC = b"NAC1"


def encode_arrays(arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any]) -> bytes:
    buf = io.BytesIO()
    meta_bytes = yaml.safe_dump(dict(meta), sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value).tobytes())
    return buf.getvalue()


def decode_arrays(blob: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint container")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a named-array container (bad magic)")
    (meta_len,) = struct.unpack("<I", take(4))
    try:
        meta = yaml.safe_load(bytes(take(meta_len)).decode("utf-8")) or {}
    except yaml.YAMLError as e:
        raise CheckpointError(f"unreadable checkpoint metadata: {e}") from e
    (count,) = struct.unpack("<I", take(4))
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(bytes(take(8 * size)), dtype="<f8").astype(np.float64)
        arrays[name] = data.reshape(shape)
    if pos != len(view):
        raise CheckpointError("trailing bytes after checkpoint arrays")
    return arrays, meta


def write_arrays(
    path: Union[str, Path], arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any]
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_arrays(arrays, meta))
    return path


def read_arrays(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint does not exist: {path}")
    return decode_arrays(path.read_bytes())

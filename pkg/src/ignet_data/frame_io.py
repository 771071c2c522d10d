"""
Frame binary format (FDF1)

FDF1, little-endian: magic "FDF1"; u32 N, H, W, C; 9 f64 K; 9 f64 R;
3 f64 t; N x 3 f64 coordinates; N u16 labels; N u8 weak mask;
u8 frame-labeled flag; H*W*3 f64 raw channels; H*W u16 dense class map.
"""

import io
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..ignet_core.errors import FrameFormatError
from ..ignet_core.geometry import CameraModel, PointCloud
from .frame import Frame

MAGIC = b"FDF1"


def encode_frame(frame: Frame) -> bytes:
    n = frame.num_points
    h, w = frame.cam.height, frame.cam.width
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<4I", n, h, w, frame.num_classes))
    buf.write(np.asarray(frame.cam.K, dtype="<f8").tobytes())
    buf.write(np.asarray(frame.cam.R, dtype="<f8").tobytes())
    buf.write(np.asarray(frame.cam.t, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(frame.cloud.xyz, dtype="<f8").tobytes())
    buf.write(frame.labels.astype("<u2").tobytes())
    buf.write(frame.weak_mask.astype("u1").tobytes())
    buf.write(struct.pack("<B", 1 if frame.frame_labeled else 0))
    buf.write(np.ascontiguousarray(frame.image, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(frame.class_map, dtype="<u2").tobytes())
    return buf.getvalue()


def decode_frame(blob: bytes) -> Frame:
    view = memoryview(blob)
    pos = 0

    def take(n_bytes: int) -> bytes:
        nonlocal pos
        if pos + n_bytes > len(view):
            raise FrameFormatError("truncated frame file")
        chunk = bytes(view[pos:pos + n_bytes])
        pos += n_bytes
        return chunk

    def array(dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(take(itemsize * count), dtype=dtype)

    if take(4) != MAGIC:
        raise FrameFormatError("not an FDF1 frame (bad magic)")
    n, h, w, c = struct.unpack("<4I", take(16))
    K = array("<f8", 9).reshape(3, 3)
    R = array("<f8", 9).reshape(3, 3)
    t = array("<f8", 3)
    xyz = array("<f8", 3 * n).reshape(n, 3)
    labels = array("<u2", n).astype(np.int64)
    weak = array("u1", n).astype(bool)
    (labeled,) = struct.unpack("<B", take(1))
    image = array("<f8", h * w * 3).reshape(h, w, 3)
    class_map = array("<u2", h * w).reshape(h, w)
    if pos != len(view):
        raise FrameFormatError("trailing bytes after frame payload")
    return Frame(
        cloud=PointCloud(xyz.astype(np.float64)),
        cam=CameraModel(K=K.astype(np.float64), R=R.astype(np.float64), t=t.astype(np.float64), width=w, height=h),
        image=image.astype(np.float64),
        class_map=class_map.astype(np.uint16),
        labels=labels,
        weak_mask=weak,
        num_classes=c,
        frame_labeled=bool(labeled),
    )


def write_frame(path: Union[str, Path], frame: Frame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_frame(frame))
    return path


def read_frame(path: Union[str, Path]) -> Frame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"frame file does not exist: {path}")
    return decode_frame(path.read_bytes())


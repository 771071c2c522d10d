"""
Shared test helpers: finite differences and hand-built frames
"""

from typing import Callable, Optional

import numpy as np

from src.ignet_core.geometry import CameraModel, PointCloud
from src.ignet_core.numerics import ParamVector, Tape, grad, value_of
from src.ignet_data.frame import Frame


def check_gradients(
    fn: Callable[[ParamVector], object],
    params: ParamVector,
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
    max_entries: int = 40,
    seed: int = 0,
):
    """Compare tape gradients of the scalar ``fn(params)`` with central differences"""
    with Tape():
        live = params.track()
        analytic = grad(fn(live), live)
    rng = np.random.default_rng(seed)
    for name in params:
        base = np.array(value_of(params[name]), dtype=np.float64)
        flat_size = base.size
        picks = rng.choice(flat_size, size=min(max_entries, flat_size), replace=False)
        for flat in picks:
            index = np.unravel_index(flat, base.shape)
            values = []
            for sign in (1.0, -1.0):
                shifted = base.copy()
                shifted[index] += sign * eps
                trial = ParamVector({**dict(params.items()), name: shifted})
                values.append(float(value_of(fn(trial))))
            numeric = (values[0] - values[1]) / (2 * eps)
            np.testing.assert_allclose(
                analytic[name][index], numeric, rtol=rtol, atol=atol, err_msg=f"{name}{index}"
            )


def small_camera(width: int = 8, height: int = 6, hfov_deg: float = 90.0) -> CameraModel:
    return CameraModel.from_fov(width, height, hfov_deg)


def make_frame(
    xyz,
    labels,
    weak_mask=None,
    cam: Optional[CameraModel] = None,
    num_classes: int = 3,
    frame_labeled: bool = True,
    seed: int = 0,
) -> Frame:
    cam = cam or small_camera()
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.int64)
    if weak_mask is None:
        weak_mask = np.ones(len(labels), dtype=bool) if frame_labeled else np.zeros(len(labels), dtype=bool)
    rng = np.random.default_rng(seed)
    return Frame(
        cloud=PointCloud(xyz),
        cam=cam,
        image=rng.uniform(0.0, 1.0, size=(cam.height, cam.width, 3)),
        class_map=rng.integers(0, num_classes, size=(cam.height, cam.width)).astype(np.uint16),
        labels=labels,
        weak_mask=np.asarray(weak_mask, dtype=bool),
        num_classes=num_classes,
        frame_labeled=frame_labeled,
    )


def ring_cloud(n: int = 60, radius: float = 10.0, z: float = -1.0) -> np.ndarray:
    """Points evenly spaced on a horizontal circle around the sensor"""
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), np.full(n, z)], axis=1)

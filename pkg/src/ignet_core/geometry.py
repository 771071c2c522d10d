"""
Pinhole projection of LiDAR points into the camera image
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import CameraError, ShapeError

DEPTH_EPS = 1e-9


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about the vertical (z) axis"""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def lidar_to_camera_axes() -> np.ndarray:
    """Camera looking along LiDAR +x: camera x = -y, camera y = -z, depth = x"""
    return np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    """Intrinsic parameters K plus extrinsics [R|t] mapping LiDAR to camera.

    Attributes:
        K: 3x3 intrinsic matrix in pixels.
        R: 3x3 rotation, LiDAR frame to camera frame.
        t: translation in meters.
        width, height: image extent in pixels.
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if K.shape != (3, 3) or R.shape != (3, 3):
            raise CameraError(f"K and R must be 3x3, got {K.shape} and {R.shape}")
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise CameraError("focal entries K[0][0], K[1][1] must be positive")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise CameraError("R must be a proper rotation (orthonormal, det 1)")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise CameraError(f"image extent must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def from_fov(
        cls,
        width: int,
        height: int,
        hfov_deg: float,
        position: Tuple[float, float, float] = (0.0, 0.0, 0.0),
        yaw: float = 0.0,
    ) -> "CameraModel":
        """Square-pixel camera at ``position`` (LiDAR frame) looking along yaw"""
        if not 0.0 < hfov_deg < 180.0:
            raise CameraError(f"pinhole horizontal FOV must lie in (0, 180), got {hfov_deg}")
        fx = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        K = np.array([[fx, 0.0, width / 2.0], [0.0, fx, height / 2.0], [0.0, 0.0, 1.0]])
        R = lidar_to_camera_axes() @ yaw_matrix(yaw).T
        t = -R @ np.asarray(position, dtype=np.float64)
        return cls(K=K, R=R, t=t, width=width, height=height)

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def extrinsics(self) -> np.ndarray:
        """[R|t] as a 3x4 matrix"""
        return np.hstack([self.R, self.t[:, None]])

    @property
    def center(self) -> np.ndarray:
        """Camera center in the LiDAR frame"""
        return -self.R.T @ self.t

    def with_extrinsics(self, R: np.ndarray, t: np.ndarray) -> "CameraModel":
        return CameraModel(K=self.K, R=R, t=t, width=self.width, height=self.height)

    def yawed(self, angle: float) -> "CameraModel":
        """Camera that sees a cloud rotated by ``yaw_matrix(angle)`` as this one sees the original"""
        return self.with_extrinsics(self.R @ yaw_matrix(angle).T, self.t)

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ray origin and unit directions (LiDAR frame) through every pixel center, row-major"""
        ls, ks = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        pix = np.stack([ks.ravel() + 0.5, ls.ravel() + 0.5, np.ones(ks.size)], axis=1)
        dirs_cam = pix @ np.linalg.inv(self.K).T
        dirs = dirs_cam @ self.R
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return self.center, dirs


@dataclass
class PointCloud:
    """N points (x, y, z) in meters in the LiDAR frame, plus optional payload channels"""

    xyz: np.ndarray
    payload: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.xyz)):
            raise ShapeError("point coordinates must be finite")
        for name, channel in self.payload.items():
            if len(channel) != len(self.xyz):
                raise ShapeError(f"payload '{name}' has {len(channel)} rows, expected {len(self.xyz)}")

    def __len__(self) -> int:
        return len(self.xyz)

    def subset(self, index: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz[index], {k: v[index] for k, v in self.payload.items()})

    def rotated(self, R: np.ndarray) -> "PointCloud":
        return PointCloud(self.xyz @ np.asarray(R).T, dict(self.payload))

    def homogeneous(self) -> np.ndarray:
        return np.hstack([self.xyz, np.ones((len(self.xyz), 1))])


@dataclass
class Correspondence:
    """Per point: valid flag, pixel (k, l) and depth. Invalid points carry pixel (-1, -1)."""

    valid: np.ndarray
    pixel: np.ndarray
    depth: np.ndarray

    def __len__(self) -> int:
        return len(self.valid)

    @property
    def k(self) -> np.ndarray:
        return self.pixel[:, 0]

    @property
    def l(self) -> np.ndarray:
        return self.pixel[:, 1]


def project_homogeneous(
    x_hom: np.ndarray,
    K: np.ndarray,
    extrinsics: np.ndarray,
    width: int,
    height: int,
) -> Correspondence:
    """x_rec = K [R|t] x_hom, k = floor(x0/x2), l = floor(x1/x2).

    Valid iff depth x2 > DEPTH_EPS and (k, l) lies in [0, width) x [0, height).
    """
    x_hom = np.asarray(x_hom, dtype=np.float64).reshape(-1, 4)
    x_rec = x_hom @ (np.asarray(K) @ np.asarray(extrinsics)).T
    depth = x_rec[:, 2]
    front = depth > DEPTH_EPS
    safe = np.where(front, depth, 1.0)
    u = np.where(front, x_rec[:, 0] / safe, -1.0)
    v = np.where(front, x_rec[:, 1] / safe, -1.0)
    valid = front & (u >= 0.0) & (u < width) & (v >= 0.0) & (v < height)
    pixel = np.full((len(x_hom), 2), -1, dtype=np.int64)
    pixel[valid, 0] = np.floor(u[valid]).astype(np.int64)
    pixel[valid, 1] = np.floor(v[valid]).astype(np.int64)
    # float rounding can put floor(u) on the far border for u just below width
    on_border = valid & ((pixel[:, 0] >= width) | (pixel[:, 1] >= height))
    valid &= ~on_border
    pixel[on_border] = -1
    return Correspondence(valid=valid, pixel=pixel, depth=depth)


def project(points: PointCloud, cam: CameraModel) -> Correspondence:
    return project_homogeneous(points.homogeneous(), cam.K, cam.extrinsics, cam.width, cam.height)


def partition(corr: Correspondence) -> Tuple[np.ndarray, np.ndarray]:
    """Index sets I (valid correspondence) and O (no valid correspondence)"""
    valid = np.asarray(corr.valid, dtype=bool)
    return np.flatnonzero(valid), np.flatnonzero(~valid)


def fov_mask(
    points: PointCloud,
    intrinsics: CameraModel,
    extrinsics: Optional[CameraModel] = None,
) -> np.ndarray:
    """Binary mask of points projecting validly under K of ``intrinsics`` and
    [R|t] of ``extrinsics`` (defaults to ``intrinsics``'s own pose)."""
    pose = extrinsics if extrinsics is not None else intrinsics
    corr = project_homogeneous(
        points.homogeneous(),
        intrinsics.K,
        pose.extrinsics,
        intrinsics.width,
        intrinsics.height,
    )
    return corr.valid.astype(np.uint8)

"""
Frame: one paired LiDAR scan and camera image with labels
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from sklearn.neighbors import KDTree

from ..ignet_core.errors import ShapeError
from ..ignet_core.geometry import CameraModel, Correspondence, PointCloud, project, yaw_matrix

SKY = 0xFFFF
NUM_POINT_FEATURES = 6


@dataclass
class Frame:
    """Unit of training data.

    Points are stored in scan order (ring-major, azimuth-minor), so
    consecutive indices are neighbours along a scan line.
    """

    cloud: PointCloud
    cam: CameraModel
    image: np.ndarray
    class_map: np.ndarray
    labels: np.ndarray
    weak_mask: np.ndarray
    num_classes: int
    frame_labeled: bool = True

    def __post_init__(self):
        n = len(self.cloud)
        self.image = np.asarray(self.image, dtype=np.float64)
        self.class_map = np.asarray(self.class_map, dtype=np.uint16)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.weak_mask = np.asarray(self.weak_mask, dtype=bool).reshape(-1)
        self.frame_labeled = bool(self.frame_labeled)
        if len(self.labels) != n or len(self.weak_mask) != n:
            raise ShapeError(
                f"labels ({len(self.labels)}) and weak_mask ({len(self.weak_mask)}) "
                f"must match the point count {n}"
            )
        if self.image.shape != (self.cam.height, self.cam.width, 3):
            raise ShapeError(
                f"image shape {self.image.shape} does not match camera "
                f"{self.cam.height}x{self.cam.width}x3"
            )
        if self.class_map.shape != (self.cam.height, self.cam.width):
            raise ShapeError(f"class map shape {self.class_map.shape} does not match camera")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ShapeError(f"labels must lie in [0, {self.num_classes})")
        if not self.frame_labeled and self.weak_mask.any():
            raise ShapeError("unlabeled frames cannot carry weak labels")

    @property
    def num_points(self) -> int:
        return len(self.cloud)

    def correspondence(self) -> Correspondence:
        return project(self.cloud, self.cam)

    def with_weak_mask(self, weak_mask: np.ndarray, frame_labeled: Optional[bool] = None) -> "Frame":
        labeled = self.frame_labeled if frame_labeled is None else frame_labeled
        return replace(self, weak_mask=np.asarray(weak_mask, dtype=bool), frame_labeled=labeled)

    def densely_labeled(self) -> "Frame":
        return replace(self, weak_mask=np.ones(self.num_points, dtype=bool), frame_labeled=True)

    def rotated(self, angle: float) -> "Frame":
        """Yaw the cloud and the camera pose together; correspondences are unchanged"""
        return replace(
            self,
            cloud=self.cloud.rotated(yaw_matrix(angle)),
            cam=self.cam.yawed(angle),
        )


def point_features(cloud: PointCloud, max_range: float = 50.0, neighbors: int = 8) -> np.ndarray:
    """Per-point input features for the 3D network.

    Columns: x/R, y/R, z, horizontal range/R, local height (z minus the lowest
    neighbour z) and local vertical extent of the neighbourhood.
    """
    xyz = cloud.xyz
    n = len(xyz)
    feats = np.zeros((n, NUM_POINT_FEATURES))
    if n == 0:
        return feats
    horizontal = np.hypot(xyz[:, 0], xyz[:, 1])
    k = min(neighbors + 1, n)
    _, idx = KDTree(xyz).query(xyz, k=k)
    neighbour_z = xyz[idx, 2]
    feats[:, 0] = xyz[:, 0] / max_range
    feats[:, 1] = xyz[:, 1] / max_range
    feats[:, 2] = xyz[:, 2]
    feats[:, 3] = horizontal / max_range
    feats[:, 4] = xyz[:, 2] - neighbour_z.min(axis=1)
    feats[:, 5] = neighbour_z.max(axis=1) - neighbour_z.min(axis=1)
    return feats

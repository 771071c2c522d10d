"""
FOVMix: graft frame A's image and its in-FOV points into frame B, evicting
B's points from the same camera sector
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from ..ignet_core.errors import ConfigError
from ..ignet_core.geometry import CameraModel, Correspondence, PointCloud, fov_mask, project
from ..ignet_data.frame import Frame

logger = logging.getLogger(__name__)

FROM_A = 0
FROM_B = 1


@dataclass
class MixedSample:
    """Training sample produced by ``fovmix``.

    Points are kept-A followed by kept-B. The image and camera are A's and
    the in-image set is exactly kept-A's projecting points. ``pair`` holds the
    batch positions of (A, B) when the sample comes from ``fovmix_batch``.
    """

    cloud: PointCloud
    labels: np.ndarray
    weak_mask: np.ndarray
    image: np.ndarray
    cam: CameraModel
    class_map: np.ndarray
    provenance: np.ndarray
    num_classes: int
    corr: Correspondence
    pair: Tuple[int, int] = (-1, -1)

    @property
    def num_points(self) -> int:
        return len(self.cloud)

    @property
    def frame_labeled(self) -> bool:
        return bool(self.weak_mask.any())

    def correspondence(self) -> Correspondence:
        return self.corr


def fovmix(a: Frame, b: Frame) -> MixedSample:
    if a.num_classes != b.num_classes:
        raise ConfigError(f"cannot mix frames with {a.num_classes} and {b.num_classes} classes")
    keep_a = fov_mask(a.cloud, a.cam).astype(bool)
    keep_b = ~fov_mask(b.cloud, a.cam, b.cam).astype(bool)
    if not keep_a.any():
        logger.warning("FOVMix sample A has no points inside its camera view")
    cloud_a = a.cloud.subset(keep_a)
    cloud_b = b.cloud.subset(keep_b)
    n_a, n_b = len(cloud_a), len(cloud_b)

    corr_a = project(cloud_a, a.cam)
    corr = Correspondence(
        valid=np.concatenate([corr_a.valid, np.zeros(n_b, dtype=bool)]),
        pixel=np.concatenate([corr_a.pixel, np.full((n_b, 2), -1, dtype=np.int64)]),
        depth=np.concatenate([corr_a.depth, np.zeros(n_b)]),
    )
    return MixedSample(
        cloud=PointCloud(np.concatenate([cloud_a.xyz, cloud_b.xyz])),
        labels=np.concatenate([a.labels[keep_a], b.labels[keep_b]]),
        weak_mask=np.concatenate([a.weak_mask[keep_a], b.weak_mask[keep_b]]),
        image=a.image,
        cam=a.cam,
        class_map=a.class_map,
        provenance=np.concatenate(
            [np.full(n_a, FROM_A, dtype=np.uint8), np.full(n_b, FROM_B, dtype=np.uint8)]
        ),
        num_classes=a.num_classes,
        corr=corr,
    )


def fovmix_batch(frames: Sequence[Frame], semi_mode: bool, seed) -> List[MixedSample]:
    """Yaw every frame at random, then mix each frame (role B) with a partner (role A).

    Partners are drawn from the other frames of the batch; in ``semi_mode``
    only labeled frames may play A.
    """
    if not frames:
        return []
    rng = np.random.default_rng(seed)
    rotated = [frame.rotated(rng.uniform(0.0, 2.0 * np.pi)) for frame in frames]
    labeled = [i for i, frame in enumerate(frames) if frame.frame_labeled]
    if semi_mode and not labeled:
        raise ConfigError("semi-supervised FOVMix needs at least one labeled frame in the batch")

    samples = []
    for j, frame in enumerate(rotated):
        pool = labeled if semi_mode else list(range(len(frames)))
        others = [i for i in pool if i != j]
        partner = int(rng.choice(others)) if others else j
        samples.append(replace(fovmix(rotated[partner], frame), pair=(partner, j)))
    return samples

"""
Procedural LiDAR/camera scenes: ground plane plus box and cylinder objects,
sampled by simulated LiDAR rings and rendered from the camera pose.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..ignet_core.config import SceneConfig
from ..ignet_core.geometry import CameraModel, PointCloud
from .frame import SKY, Frame

logger = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]

_DIR_EPS = 1e-15
_PLACEMENT_ATTEMPTS = 50

# fixed invertible channel mixing applied to source-domain renderings
SOURCE_COLOR_MIX = 0.65 * np.eye(3) + 0.35 * np.roll(np.eye(3), 1, axis=1)
SOURCE_COLOR_OFFSET = np.array([0.05, -0.03, 0.04])


def _rng(seed: Seed, stream: int) -> np.random.Generator:
    base = [int(s) for s in np.atleast_1d(seed)]
    return np.random.default_rng(base + [stream])


def _safe_dirs(dirs: np.ndarray) -> np.ndarray:
    return np.where(np.abs(dirs) < _DIR_EPS, np.where(dirs < 0, -_DIR_EPS, _DIR_EPS), dirs)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box"""

    center: Tuple[float, float, float]
    half: Tuple[float, float, float]
    class_id: int

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        c, h = np.asarray(self.center), np.asarray(self.half)
        inv = 1.0 / _safe_dirs(dirs)
        t1 = (c - h - origin) * inv
        t2 = (c + h - origin) * inv
        t_near = np.minimum(t1, t2).max(axis=1)
        t_far = np.maximum(t1, t2).min(axis=1)
        hit = (t_far >= t_near) & (t_near > 0)
        return np.where(hit, t_near, np.inf)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        c, h = np.asarray(self.center), np.asarray(self.half)
        return np.all(np.abs(points - c) <= h + tol, axis=1)


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder between z_min and z_max"""

    center_xy: Tuple[float, float]
    radius: float
    z_min: float
    z_max: float
    class_id: int

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ox = origin[0] - self.center_xy[0]
        oy = origin[1] - self.center_xy[1]
        dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = ox * ox + oy * oy - self.radius**2
        disc = b * b - 4.0 * a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * np.maximum(a, _DIR_EPS))
        z_side = origin[2] + t_side * dz
        side_ok = (disc >= 0) & (a > _DIR_EPS) & (t_side > 0)
        side_ok &= (z_side >= self.z_min) & (z_side <= self.z_max)
        best = np.where(side_ok, t_side, np.inf)
        safe_dz = _safe_dirs(dz)
        for z_cap in (self.z_max, self.z_min):
            t_cap = (z_cap - origin[2]) / safe_dz
            px = ox + t_cap * dx
            py = oy + t_cap * dy
            cap_ok = (t_cap > 0) & (px * px + py * py <= self.radius**2)
            best = np.minimum(best, np.where(cap_ok, t_cap, np.inf))
        return best

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        r = np.hypot(points[:, 0] - self.center_xy[0], points[:, 1] - self.center_xy[1])
        return (
            (r <= self.radius + tol)
            & (points[:, 2] >= self.z_min - tol)
            & (points[:, 2] <= self.z_max + tol)
        )


Solid = Union[Box, Cylinder]


@dataclass
class Scene:
    """Geometry shared by every rendering of one generated scene"""

    ground_z: float
    solids: List[Solid] = field(default_factory=list)

    def cast(
        self, origin: np.ndarray, dirs: np.ndarray, max_t: float
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """First hit per ray: distance, class id (-1 on miss), solid index (-1 for ground)"""
        origin = np.asarray(origin, dtype=np.float64)
        n = len(dirs)
        t_best = np.full(n, np.inf)
        down = dirs[:, 2] < -_DIR_EPS
        t_best[down] = (self.ground_z - origin[2]) / dirs[down, 2]
        t_best[t_best <= 0] = np.inf
        cls = np.where(np.isfinite(t_best), 0, -1)
        owner = np.full(n, -1)
        for index, solid in enumerate(self.solids):
            t = solid.intersect(origin, dirs)
            closer = t < t_best
            t_best[closer] = t[closer]
            cls[closer] = solid.class_id
            owner[closer] = index
        miss = t_best > max_t
        cls[miss] = -1
        owner[miss] = -1
        return t_best, cls, owner


def lidar_directions(cfg: SceneConfig) -> np.ndarray:
    """Unit ray directions, ring-major then azimuth"""
    elevations = np.radians(np.linspace(cfg.elevation_min_deg, cfg.elevation_max_deg, cfg.rings))
    azimuths = np.radians(np.arange(0.0, 360.0, cfg.azimuth_step_deg))
    el, az = np.meshgrid(elevations, azimuths, indexing="ij")
    el, az = el.ravel(), az.ravel()
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)


def make_camera(cfg: SceneConfig) -> CameraModel:
    return CameraModel.from_fov(
        cfg.image_width, cfg.image_height, cfg.camera_hfov_deg, position=cfg.camera_position
    )


def build_scene(seed: Seed, cfg: SceneConfig) -> Scene:
    """Sample object solids; deterministic in (seed, cfg)"""
    cfg.validate()
    rng = _rng(seed, 0)
    ground_z = -cfg.sensor_height
    keep_clear = [np.zeros(3), np.asarray(cfg.camera_position, dtype=np.float64)]
    solids: List[Solid] = []
    for class_id, spec in enumerate(cfg.classes):
        if spec.shape == "ground":
            continue
        count = int(rng.integers(spec.count_min, spec.count_max + 1))
        for _ in range(count):
            for _attempt in range(_PLACEMENT_ATTEMPTS):
                r = rng.uniform(cfg.place_min_range, cfg.place_max_range)
                phi = rng.uniform(0.0, 2.0 * np.pi)
                size = rng.uniform(spec.size_min, spec.size_max)
                x, y = r * np.cos(phi), r * np.sin(phi)
                if spec.shape == "box":
                    if rng.random() < 0.5:
                        size[0], size[1] = size[1], size[0]
                    solid: Solid = Box(
                        center=(x, y, ground_z + size[2] / 2.0),
                        half=tuple(size / 2.0),
                        class_id=class_id,
                    )
                else:
                    solid = Cylinder(
                        center_xy=(x, y),
                        radius=size[0] / 2.0,
                        z_min=ground_z,
                        z_max=ground_z + size[2],
                        class_id=class_id,
                    )
                if not any(solid.contains(p[None, :], tol=1.0)[0] for p in keep_clear):
                    solids.append(solid)
                    break
    return Scene(ground_z=ground_z, solids=solids)


def scan(scene: Scene, cfg: SceneConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Simulated LiDAR sweep from the origin: points in scan order and exact labels"""
    dirs = lidar_directions(cfg)
    t, cls, _ = scene.cast(np.zeros(3), dirs, cfg.max_range)
    hit = cls >= 0
    t = t[hit]
    if cfg.range_noise > 0:
        t = t + rng.normal(0.0, cfg.range_noise, size=t.shape)
    return dirs[hit] * t[:, None], cls[hit]


def render(
    scene: Scene,
    cam: CameraModel,
    cfg: SceneConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """Raw 3-channel image in [0, 1] and dense class map (SKY where nothing is hit)"""
    origin, dirs = cam.pixel_rays()
    t, cls, owner = scene.cast(origin, dirs, max_t=4.0 * cfg.max_range)
    palette = np.array([c.color for c in cfg.classes] + [cfg.sky_color], dtype=np.float64)
    jitter = rng.uniform(-0.06, 0.06, size=(len(scene.solids) + 1, 3))
    colors = palette[np.where(cls >= 0, cls, len(cfg.classes))]
    colors = colors + jitter[np.where(owner >= 0, owner, len(scene.solids))] * (cls > 0)[:, None]
    shade = np.where(cls >= 0, 0.75 + 0.25 * np.exp(-np.where(np.isfinite(t), t, 0.0) / 30.0), 1.0)
    colors = colors * shade[:, None]
    colors = colors + rng.normal(0.0, cfg.color_noise, size=colors.shape)
    if cfg.domain == "source":
        colors = colors @ SOURCE_COLOR_MIX.T + SOURCE_COLOR_OFFSET
        colors = colors + rng.normal(0.0, cfg.source_color_noise, size=colors.shape)
    image = np.clip(colors, 0.0, 1.0).reshape(cam.height, cam.width, 3)
    class_map = np.where(cls >= 0, cls, SKY).astype(np.uint16).reshape(cam.height, cam.width)
    return image, class_map


def gen_scene(seed: Seed, cfg: SceneConfig) -> Frame:
    """Generate one densely labeled frame; deterministic in (seed, cfg).

    Geometry depends on the seed only, so source and target renderings of
    the same seed share the point cloud and dense class map.
    """
    scene = build_scene(seed, cfg)
    xyz, labels = scan(scene, cfg, _rng(seed, 1))
    cam = make_camera(cfg)
    domain_stream = 2 if cfg.domain == "target" else 3
    image, class_map = render(scene, cam, cfg, _rng(seed, domain_stream))
    logger.debug(
        f"Generated {cfg.domain} scene with {len(scene.solids)} objects and {len(xyz)} points",
        extra={"seed": list(np.atleast_1d(seed))},
    )
    return Frame(
        cloud=PointCloud(xyz),
        cam=cam,
        image=image,
        class_map=class_map,
        labels=labels,
        weak_mask=np.ones(len(labels), dtype=bool),
        num_classes=cfg.num_classes,
        frame_labeled=True,
    )


def with_domain(cfg: SceneConfig, domain: str) -> SceneConfig:
    return replace(cfg, domain=domain)

"""
Configuration management for the ignet pipeline
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar, Union

import yaml

from .errors import ConfigError

TOGGLES = ("mt", "ig", "cl", "fovmix")
GUIDE_MODES = ("source-only", "weak-only", "uda", "wda")

T = TypeVar("T")


@dataclass
class ClassSpec:
    """One semantic class of the synthetic scene.

    ``size_min``/``size_max`` are (dx, dy, dz) extents in meters; for cylinders
    dx is the diameter and dy is ignored.
    """

    name: str
    shape: str = "box"
    size_min: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    size_max: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    count_min: int = 0
    count_max: int = 0
    color: Tuple[float, float, float] = (0.5, 0.5, 0.5)

    @property
    def max_horizontal_extent(self) -> float:
        if self.shape == "cylinder":
            return float(self.size_max[0])
        return float(max(self.size_max[0], self.size_max[1]))


def default_classes() -> List[ClassSpec]:
    return [
        ClassSpec("ground", shape="ground", color=(0.45, 0.40, 0.33)),
        ClassSpec(
            "vehicle", "box", (3.5, 1.6, 1.3), (4.8, 2.0, 1.8), 3, 6, (0.80, 0.18, 0.16)
        ),
        ClassSpec(
            "pedestrian", "cylinder", (0.5, 0.5, 1.5), (0.8, 0.8, 1.9), 3, 8, (0.20, 0.30, 0.85)
        ),
        ClassSpec(
            "wall", "box", (1.0, 6.0, 2.5), (2.0, 14.0, 4.0), 1, 3, (0.55, 0.72, 0.30)
        ),
    ]


@dataclass
class SceneConfig:
    """Procedural LiDAR/camera scene parameters"""

    classes: List[ClassSpec] = field(default_factory=default_classes)
    azimuth_step_deg: float = 1.0
    elevation_min_deg: float = -22.0
    elevation_max_deg: float = 0.0
    rings: int = 10
    max_range: float = 50.0
    sensor_height: float = 1.7
    place_min_range: float = 4.0
    place_max_range: float = 40.0
    camera_hfov_deg: float = 90.0
    image_width: int = 64
    image_height: int = 24
    camera_position: Tuple[float, float, float] = (0.3, 0.0, -0.1)
    range_noise: float = 0.0
    color_noise: float = 0.03
    source_color_noise: float = 0.06
    sky_color: Tuple[float, float, float] = (0.62, 0.78, 0.95)
    domain: str = "target"

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> List[str]:
        return [c.name for c in self.classes]

    def small_classes(self) -> List[int]:
        """Object classes whose generated horizontal extent stays below 1 m"""
        return [
            i
            for i, c in enumerate(self.classes)
            if c.shape != "ground" and c.max_horizontal_extent < 1.0
        ]

    def large_classes(self) -> List[int]:
        small = set(self.small_classes())
        return [
            i for i, c in enumerate(self.classes) if c.shape != "ground" and i not in small
        ]

    def validate(self) -> "SceneConfig":
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.classes[0].shape != "ground":
            raise ConfigError("class 0 must be the ground class")
        for spec in self.classes[1:]:
            if spec.shape not in ("box", "cylinder"):
                raise ConfigError(f"class '{spec.name}' has unknown shape '{spec.shape}'")
            if spec.count_min > spec.count_max or spec.count_min < 0:
                raise ConfigError(f"class '{spec.name}' has invalid object counts")
        if not 0.0 < self.camera_hfov_deg < 180.0:
            raise ConfigError("camera FOV must lie in (0, 180) degrees for a pinhole camera")
        if self.domain not in ("source", "target"):
            raise ConfigError(f"domain must be 'source' or 'target', got '{self.domain}'")
        if self.rings < 1 or self.azimuth_step_deg <= 0:
            raise ConfigError("LiDAR needs at least one ring and a positive azimuth step")
        if not 0 < self.place_min_range < self.place_max_range:
            raise ConfigError("object placement ranges are inconsistent")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SceneConfig":
        data = dict(data)
        if "classes" in data:
            data["classes"] = [
                ClassSpec(**{k: _tuple(v) for k, v in c.items()}) for c in data["classes"]
            ]
        return _build(cls, {k: _tuple(v) if k != "classes" else v for k, v in data.items()})


@dataclass
class GuideConfig:
    """2D image-guidance network training settings"""

    seed: int = 0
    feature_dim: int = 16
    hidden: int = 32
    steps: int = 400
    lr: float = 0.1
    alpha: float = 0.99
    lambda_p: float = 10.0
    mode: str = "wda"
    log_every: int = 50

    def validate(self) -> "GuideConfig":
        if self.mode not in GUIDE_MODES:
            raise ConfigError(f"guide mode must be one of {GUIDE_MODES}, got '{self.mode}'")
        if self.lambda_p < 1.0:
            raise ConfigError(f"lambda_p must be >= 1, got {self.lambda_p}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.feature_dim < 1 or self.hidden < 1:
            raise ConfigError("feature_dim and hidden must be positive")
        if self.steps < 0 or self.lr <= 0:
            raise ConfigError("steps must be >= 0 and lr > 0")
        return self


@dataclass
class RunConfig:
    """Full pipeline configuration"""

    seed: int = 0
    num_classes: int = 4
    feature_dim: int = 16
    hidden: int = 32
    alpha: float = 0.999
    lam: float = 0.001
    lambda_p: float = 10.0
    tau: float = 0.1
    scribble_budget: float = 0.08
    semi_rate: Optional[float] = None
    steps: int = 300
    lr: float = 0.1
    batch_size: int = 2
    mt: bool = False
    ig: bool = False
    cl: bool = False
    fovmix: bool = False
    train_frames: int = 100
    val_frames: Optional[int] = None
    source_frames: Optional[int] = None
    guide_steps: int = 400
    guide_lr: float = 0.1
    guide_alpha: float = 0.99
    guide_hidden: int = 32
    guide_mode: str = "wda"
    log_every: int = 25

    @property
    def toggles(self) -> Dict[str, bool]:
        return {name: bool(getattr(self, name)) for name in TOGGLES}

    def with_toggles(self, toggles: Union[str, Sequence[str], Mapping[str, bool]]) -> "RunConfig":
        return replace(self, **parse_toggles(toggles))

    def guide_config(self) -> GuideConfig:
        return GuideConfig(
            seed=self.seed,
            feature_dim=self.feature_dim,
            hidden=self.guide_hidden,
            steps=self.guide_steps,
            lr=self.guide_lr,
            alpha=self.guide_alpha,
            lambda_p=self.lambda_p,
            mode=self.guide_mode,
            log_every=max(self.log_every, 1),
        )

    def validate(self, guide_available: Optional[bool] = None) -> "RunConfig":
        """Check ranges and the toggle lattice (IG needs a guide, CL needs IG)"""
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.feature_dim < 1 or self.hidden < 1:
            raise ConfigError("feature_dim and hidden must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.lambda_p < 1:
            raise ConfigError(f"lambda_p must be >= 1, got {self.lambda_p}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not 0.0 < self.scribble_budget < 1.0:
            raise ConfigError(f"scribble_budget must lie in (0, 1), got {self.scribble_budget}")
        if self.semi_rate is not None and not 0.0 < self.semi_rate <= 1.0:
            raise ConfigError(f"semi_rate must lie in (0, 1], got {self.semi_rate}")
        if self.steps < 0 or self.lr <= 0:
            raise ConfigError("steps must be >= 0 and lr > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.cl and not self.ig:
            raise ConfigError("toggle 'cl' requires 'ig' (contrastive loss uses guide features)")
        if self.ig and guide_available is False:
            raise ConfigError("toggle 'ig' requires a trained guide")
        self.guide_config().validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        return _build(cls, data)


def parse_toggles(toggles: Union[str, Sequence[str], Mapping[str, bool], None]) -> Dict[str, bool]:
    """'mt,ig' or ['mt', 'ig'] or {'mt': True} -> full toggle map"""
    if toggles is None:
        return {name: False for name in TOGGLES}
    if isinstance(toggles, Mapping):
        unknown = set(toggles) - set(TOGGLES)
        if unknown:
            raise ConfigError(f"unknown toggles {sorted(unknown)}")
        return {name: bool(toggles.get(name, False)) for name in TOGGLES}
    if isinstance(toggles, str):
        toggles = [t for t in toggles.split(",") if t.strip()]
    names = [t.strip().lower() for t in toggles]
    unknown = set(names) - set(TOGGLES) - {"none"}
    if unknown:
        raise ConfigError(f"unknown toggles {sorted(unknown)}")
    return {name: name in names for name in TOGGLES}


def _tuple(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _build(cls: Type[T], data: Mapping[str, Any]) -> T:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"invalid {cls.__name__}: {e}") from e


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file does not exist: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"unreadable config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a key: value mapping")
    return data


def dump_yaml(data: Mapping[str, Any]) -> str:
    return yaml.safe_dump(_plain(dict(data)), sort_keys=True)


def load_run_config(path: Union[str, Path], **overrides: Any) -> RunConfig:
    data = load_yaml(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def load_scene_config(path: Union[str, Path]) -> SceneConfig:
    return SceneConfig.from_dict(load_yaml(path))

"""
ignet core - numerics, geometry and shared infrastructure
"""

from .config import ClassSpec, GuideConfig, RunConfig, SceneConfig, parse_toggles
from .errors import (
    CameraError,
    CheckpointError,
    ConfigError,
    FrameFormatError,
    IgnetError,
    NonFiniteLossError,
    NotScalarError,
    ShapeError,
    TrainingDivergedError,
)
from .geometry import CameraModel, Correspondence, PointCloud, fov_mask, partition, project
from .logging import JSONFormatter, setup_logging
from .metrics import RunMetrics
from .numerics import ParamVector, Tape, Var, grad, mlp_forward, no_tape, softmax

__version__ = "1.0.0"
__all__ = [
    "CameraError",
    "CameraModel",
    "CheckpointError",
    "ClassSpec",
    "ConfigError",
    "Correspondence",
    "FrameFormatError",
    "GuideConfig",
    "IgnetError",
    "JSONFormatter",
    "NonFiniteLossError",
    "NotScalarError",
    "ParamVector",
    "PointCloud",
    "RunConfig",
    "RunMetrics",
    "SceneConfig",
    "ShapeError",
    "Tape",
    "TrainingDivergedError",
    "Var",
    "fov_mask",
    "grad",
    "mlp_forward",
    "no_tape",
    "parse_toggles",
    "partition",
    "project",
    "setup_logging",
    "softmax",
]

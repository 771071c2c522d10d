"""
Evaluation of student (or EMA teacher) weights on labeled frames
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..ignet_core.config import SceneConfig
from ..ignet_core.numerics import no_tape
from ..ignet_data.frame import Frame, point_features
from ..ignet_eval.metrics import EvalReport, evaluate_points
from .checkpoint import Checkpoint


def predict_frames(
    ckpt: Checkpoint, frames: Sequence[Frame], max_range: float, use_teacher: bool = False
) -> List[np.ndarray]:
    net = ckpt.net
    weights = ckpt.weights(use_teacher)
    out = []
    with no_tape():
        for frame in frames:
            out.append(net.predict_classes(weights, point_features(frame.cloud, max_range)))
    return out


def evaluate(
    ckpt: Checkpoint,
    frames: Sequence[Frame],
    scene: SceneConfig,
    use_teacher: bool = False,
    reference_miou: Optional[float] = None,
) -> EvalReport:
    """Point-level report over ``frames`` against their full labels"""
    preds = predict_frames(ckpt, frames, scene.max_range, use_teacher)
    samples: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = [
        (frame.cloud.xyz, frame.labels, pred) for frame, pred in zip(frames, preds)
    ]
    return evaluate_points(
        samples,
        ckpt.config.num_classes,
        small_classes=scene.small_classes(),
        large_classes=scene.large_classes(),
        reference_miou=reference_miou,
        class_names=scene.class_names,
    )

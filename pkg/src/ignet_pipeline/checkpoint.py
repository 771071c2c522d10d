"""
Student checkpoints: student weights, EMA teacher, run config, guide
reference and loss history in one named-array container
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..ignet_core.config import RunConfig
from ..ignet_core.containers import read_arrays, write_arrays
from ..ignet_core.errors import CheckpointError
from ..ignet_core.numerics import ParamVector
from ..ignet_data.frame import NUM_POINT_FEATURES
from ..ignet_student.network import StudentNet
from ..ignet_student.teacher import TeacherState

STUDENT_KIND = "student"


@dataclass
class Checkpoint:
    params: ParamVector
    teacher: TeacherState
    config: RunConfig
    step: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)
    guide_path: Optional[str] = None
    guide_digest: Optional[str] = None

    @property
    def net(self) -> StudentNet:
        return network_for(self.config)

    def weights(self, use_teacher: bool = False) -> ParamVector:
        return self.teacher.shadow if use_teacher else self.params


def network_for(cfg: RunConfig) -> StudentNet:
    return StudentNet(
        num_classes=cfg.num_classes,
        feature_dim=cfg.feature_dim,
        hidden=cfg.hidden,
        in_features=NUM_POINT_FEATURES,
    )


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    arrays = {
        **{f"student.{k}": v for k, v in ckpt.params.arrays().items()},
        **{f"teacher.{k}": v for k, v in ckpt.teacher.shadow.arrays().items()},
    }
    meta: Dict[str, Any] = {
        "kind": STUDENT_KIND,
        "config": ckpt.config.to_dict(),
        "step": int(ckpt.step),
        "teacher_alpha": float(ckpt.teacher.alpha),
        "teacher_step": int(ckpt.teacher.step),
        "history": [dict(entry) for entry in ckpt.history],
        "guide": {"path": ckpt.guide_path, "digest": ckpt.guide_digest},
    }
    return write_arrays(path, arrays, meta)


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    arrays, meta = read_arrays(path)
    if meta.get("kind") != STUDENT_KIND:
        raise CheckpointError(f"{path} is not a student checkpoint (kind={meta.get('kind')!r})")
    try:
        config = RunConfig.from_dict(meta["config"])
        params = ParamVector(arrays).select("student.")
        shadow = ParamVector(arrays).select("teacher.")
        teacher = TeacherState(shadow=shadow, alpha=float(meta["teacher_alpha"]), step=int(meta["teacher_step"]))
        guide = meta.get("guide") or {}
        ckpt = Checkpoint(
            params=params,
            teacher=teacher,
            config=config,
            step=int(meta["step"]),
            history=list(meta.get("history") or []),
            guide_path=guide.get("path"),
            guide_digest=guide.get("digest"),
        )
    except KeyError as e:
        raise CheckpointError(f"student checkpoint metadata lacks {e}") from e

    reference = ckpt.net.init(np.random.default_rng(0))
    if not reference.compatible(params) or not reference.compatible(shadow):
        raise CheckpointError(f"weights in {path} do not match the recorded network layout")
    return ckpt

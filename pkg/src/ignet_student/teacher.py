"""
Mean teacher: EMA shadow weights, gradient-free teacher inference and
teacher class assignment
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..ignet_core.errors import ConfigError
from ..ignet_core.numerics import ParamVector, no_tape, value_of

if TYPE_CHECKING:
    from .network import Prediction


@dataclass(frozen=True)
class TeacherState:
    """EMA shadow of the student weights.

    The shadow is a convex combination of its initialization and every
    student iterate it has seen.
    """

    shadow: ParamVector
    alpha: float
    step: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"EMA alpha must lie in [0, 1], got {self.alpha}")


def init_teacher(student: ParamVector, alpha: float) -> TeacherState:
    """Teacher starts as an exact copy of the student"""
    return TeacherState(shadow=student.arrays(), alpha=float(alpha), step=0)


def ema_update(state: TeacherState, student: ParamVector) -> TeacherState:
    """shadow <- alpha * shadow + (1 - alpha) * student, elementwise"""
    state.shadow.check_compatible(student)
    a = state.alpha
    shadow = ParamVector(
        {
            name: a * value_of(old) + (1.0 - a) * value_of(student[name])
            for name, old in state.shadow.items()
        }
    )
    return TeacherState(shadow=shadow, alpha=a, step=state.step + 1)


def teacher_predict(state: TeacherState, features: np.ndarray, net) -> "Prediction":
    """Forward pass with the shadow weights; nothing is recorded on any tape"""
    with no_tape():
        pred = net.forward(state.shadow.frozen(), features)
    return pred.detached()


def assign_classes(teacher_pred) -> np.ndarray:
    """Per-point argmax of the teacher logits; ties go to the lowest class index"""
    logits = value_of(getattr(teacher_pred, "logits", teacher_pred))
    return np.argmax(logits, axis=-1).astype(np.int64)

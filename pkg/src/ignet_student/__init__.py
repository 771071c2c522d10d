"""
3D student: network, loss terms, mean teacher and FOVMix augmentation
"""

from .fovmix import MixedSample, fovmix, fovmix_batch
from .losses import (
    GuidanceTargets,
    LossBundle,
    compose,
    ig_distill,
    mt_consistency,
    one_way_contrastive,
    supervised_ce,
    total_loss,
)
from .network import Prediction, StudentNet
from .teacher import TeacherState, assign_classes, ema_update, init_teacher, teacher_predict

__all__ = [
    "MixedSample",
    "fovmix",
    "fovmix_batch",
    "GuidanceTargets",
    "LossBundle",
    "compose",
    "ig_distill",
    "mt_consistency",
    "one_way_contrastive",
    "supervised_ce",
    "total_loss",
    "Prediction",
    "StudentNet",
    "TeacherState",
    "assign_classes",
    "ema_update",
    "init_teacher",
    "teacher_predict",
]

"""
2D image-guidance network and its weakly-supervised domain adaptation
"""

from .model import (
    GuideModel,
    PseudoLabelMap,
    da_loss,
    guide_features,
    image_patches,
    make_pseudo_labels,
    predict_pixels,
)
from .trainer import compare_guide_modes, guide_digest, load_guide, pixel_accuracy, save_guide, train_guide

__all__ = [
    "GuideModel",
    "PseudoLabelMap",
    "da_loss",
    "guide_features",
    "image_patches",
    "make_pseudo_labels",
    "predict_pixels",
    "compare_guide_modes",
    "guide_digest",
    "load_guide",
    "pixel_accuracy",
    "save_guide",
    "train_guide",
]

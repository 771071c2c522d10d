"""
2D image-guidance network: a per-pixel patch MLP featurizer followed by a
linear classifier, its pseudo-labels and its domain-adaptation loss
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..ignet_core.errors import ShapeError
from ..ignet_core.geometry import CameraModel
from ..ignet_core.numerics import (
    ParamVector,
    Var,
    add,
    log_softmax,
    mean,
    mlp_forward,
    mul,
    no_tape,
    pick,
    reduce_sum,
    value_of,
)
from ..ignet_data.frame import SKY, Frame

PATCH = 3
PATCH_INPUTS = PATCH * PATCH * 3


def image_patches(image: np.ndarray) -> np.ndarray:
    """(H*W, 27) edge-padded 3x3 neighbourhoods, row-major over pixels.

    Each row is ordered channel first, then patch row, then patch column.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected an H x W x 3 image, got {image.shape}")
    h, w, _ = image.shape
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (PATCH, PATCH), axis=(0, 1))
    return windows.reshape(h * w, PATCH_INPUTS)


@dataclass(frozen=True)
class GuideModel:
    featurizer: ParamVector
    classifier: ParamVector
    num_classes: int
    feature_dim: int
    hidden: int

    @classmethod
    def init(
        cls, rng: np.random.Generator, num_classes: int, feature_dim: int, hidden: int
    ) -> "GuideModel":
        return cls(
            featurizer=ParamVector.init_mlp(rng, (PATCH_INPUTS, hidden, feature_dim)),
            classifier=ParamVector.init_mlp(rng, (feature_dim, num_classes)),
            num_classes=num_classes,
            feature_dim=feature_dim,
            hidden=hidden,
        )

    @property
    def featurizer_spec(self) -> Tuple[int, ...]:
        return (PATCH_INPUTS, self.hidden, self.feature_dim)

    @property
    def classifier_spec(self) -> Tuple[int, ...]:
        return (self.feature_dim, self.num_classes)

    def parameters(self) -> ParamVector:
        return self.featurizer.prefixed("feat.").merged(self.classifier.prefixed("cls."))

    def with_parameters(self, params: ParamVector) -> "GuideModel":
        return replace(self, featurizer=params.select("feat."), classifier=params.select("cls."))

    def frozen(self) -> "GuideModel":
        return replace(self, featurizer=self.featurizer.frozen(), classifier=self.classifier.frozen())

    def features(self, patches) -> Var:
        return mlp_forward(self.featurizer, patches, self.featurizer_spec)

    def logits(self, patches) -> Var:
        return mlp_forward(self.classifier, self.features(patches), self.classifier_spec)


def guide_features(
    model: GuideModel, image: np.ndarray, camera: Optional[CameraModel] = None
) -> np.ndarray:
    """Per-pixel f_IG (H x W x d): the featurizer output, before the classifier"""
    image = np.asarray(image, dtype=np.float64)
    if camera is not None and image.shape[:2] != (camera.height, camera.width):
        raise ShapeError(
            f"image extent {image.shape[:2]} does not match camera {camera.height}x{camera.width}"
        )
    h, w = image.shape[:2]
    with no_tape():
        feats = value_of(model.features(image_patches(image)))
    return np.array(feats).reshape(h, w, model.feature_dim)


def predict_pixels(model: GuideModel, image: np.ndarray) -> np.ndarray:
    """Per-pixel argmax class (H x W)"""
    h, w = np.shape(image)[:2]
    with no_tape():
        logits = value_of(model.logits(image_patches(image)))
    return np.argmax(logits, axis=1).reshape(h, w).astype(np.int64)


@dataclass
class PseudoLabelMap:
    """Target-image pseudo-labels.

    ``valid`` marks supervised pixels and ``projected`` the pixels overwritten
    by a projected weak label.
    """

    classes: np.ndarray
    valid: np.ndarray
    projected: np.ndarray

    @property
    def num_projected(self) -> int:
        return int(self.projected.sum())


def make_pseudo_labels(
    teacher: Optional[GuideModel], frame: Frame, project_weak: bool = True
) -> PseudoLabelMap:
    """Teacher argmax per pixel, then weak labels written onto their pixels.

    Where several weak points hit one pixel the nearest one wins. Without a
    teacher only the projected pixels are valid.
    """
    h, w = frame.cam.height, frame.cam.width
    if teacher is not None:
        classes = predict_pixels(teacher, frame.image)
        valid = np.ones((h, w), dtype=bool)
    else:
        classes = np.zeros((h, w), dtype=np.int64)
        valid = np.zeros((h, w), dtype=bool)
    projected = np.zeros((h, w), dtype=bool)

    if project_weak:
        corr = frame.correspondence()
        points = np.flatnonzero(frame.weak_mask & corr.valid)
        if len(points):
            order = points[np.lexsort((points, corr.depth[points]))]
            flat = corr.l[order] * w + corr.k[order]
            _, first = np.unique(flat, return_index=True)
            winners = order[first]
            rows, cols = corr.l[winners], corr.k[winners]
            classes[rows, cols] = frame.labels[winners]
            valid[rows, cols] = True
            projected[rows, cols] = True
    return PseudoLabelMap(classes=classes, valid=valid, projected=projected)


def source_loss(model: GuideModel, frames: Sequence[Frame]) -> Var:
    """Mean cross-entropy over all non-sky source pixels"""
    patches, targets = [], []
    for frame in frames:
        keep = frame.class_map.reshape(-1) != SKY
        patches.append(image_patches(frame.image)[keep])
        targets.append(frame.class_map.reshape(-1)[keep].astype(np.int64))
    if not patches or sum(len(t) for t in targets) == 0:
        return Var(np.zeros(()))
    log_p = log_softmax(model.logits(np.concatenate(patches)))
    return mul(mean(pick(log_p, np.concatenate(targets))), -1.0)


def adaptation_loss(
    model: GuideModel,
    frames: Sequence[Frame],
    pseudo: Sequence[PseudoLabelMap],
    lambda_p: float,
) -> Var:
    """Pseudo-label cross-entropy, lambda_p at projected pixels and 1 elsewhere,
    summed and divided by the number of supervised pixels"""
    patches, targets, weights = [], [], []
    for frame, labels in zip(frames, pseudo):
        keep = labels.valid.reshape(-1)
        patches.append(image_patches(frame.image)[keep])
        targets.append(labels.classes.reshape(-1)[keep])
        weights.append(np.where(labels.projected.reshape(-1)[keep], lambda_p, 1.0))
    count = sum(len(t) for t in targets)
    if count == 0:
        return Var(np.zeros(()))
    log_p = log_softmax(model.logits(np.concatenate(patches)))
    nll = mul(pick(log_p, np.concatenate(targets)), -1.0)
    return mul(reduce_sum(mul(nll, np.concatenate(weights))), 1.0 / count)


def da_loss(
    model: GuideModel,
    source_batch: Sequence[Frame],
    target_batch: Sequence[Frame],
    pseudo: Union[PseudoLabelMap, Sequence[PseudoLabelMap]],
    lambda_p: float,
) -> Var:
    """L_S + L_DA"""
    if lambda_p < 1.0:
        raise ValueError(f"lambda_p must be >= 1, got {lambda_p}")
    if isinstance(pseudo, PseudoLabelMap):
        pseudo = [pseudo]
    if len(pseudo) != len(target_batch):
        raise ShapeError(f"{len(pseudo)} pseudo-label maps for {len(target_batch)} target frames")
    return add(source_loss(model, source_batch), adaptation_loss(model, target_batch, pseudo, lambda_p))

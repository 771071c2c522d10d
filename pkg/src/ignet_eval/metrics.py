"""
Segmentation metrics: confusion matrix, IoU, border / object / range splits
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import confusion_matrix
from sklearn.neighbors import KDTree

from ..ignet_core.errors import ShapeError
from ..ignet_core.geometry import PointCloud

BORDER_NEIGHBORS = 16
NEAR_RANGE = 25.0
# extra neighbours queried so distance ties at the cut are ordered by index
_TIE_SLACK = 8


@dataclass
class EvalReport:
    """Aggregated evaluation of predicted point classes"""

    confusion: np.ndarray
    per_class_iou: np.ndarray
    miou: float
    accuracy: float
    border_acc: float
    non_border_acc: float
    small_obj_acc: float
    large_obj_acc: float
    near_acc: float
    far_acc: float
    rel_miou: Optional[float] = None
    populations: Dict[str, int] = field(default_factory=dict)
    class_names: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, float]:
        """Flat scalar view used by the key=value report"""
        out = {
            "miou": self.miou,
            "accuracy": self.accuracy,
            "border_acc": self.border_acc,
            "non_border_acc": self.non_border_acc,
            "small_obj_acc": self.small_obj_acc,
            "large_obj_acc": self.large_obj_acc,
            "near_acc": self.near_acc,
            "far_acc": self.far_acc,
        }
        if self.rel_miou is not None:
            out["rel_miou"] = self.rel_miou
        names = self.class_names or [str(c) for c in range(len(self.per_class_iou))]
        for name, iou in zip(names, self.per_class_iou):
            out[f"iou.{name}"] = float(iou)
        for name, count in self.populations.items():
            out[f"count.{name}"] = count
        return out


def _xyz(cloud: Union[PointCloud, np.ndarray]) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.xyz
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def confusion_and_miou(
    pred: Sequence[int], true: Sequence[int], num_classes: int
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Confusion matrix (rows = truth), per-class IoU and mIoU.

    IoU_c = TP / (TP + FP + FN); classes absent from both truth and prediction
    get NaN and are left out of the mean.
    """
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape:
        raise ShapeError(f"prediction {pred.shape} and truth {true.shape} differ in length")
    labels = list(range(num_classes))
    if len(true) == 0:
        conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    else:
        conf = confusion_matrix(true, pred, labels=labels).astype(np.int64)
    tp = np.diag(conf).astype(np.float64)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    denom = tp + fp + fn
    iou = np.full(num_classes, np.nan)
    present = denom > 0
    iou[present] = tp[present] / denom[present]
    miou = float(np.mean(iou[present])) if present.any() else 0.0
    return conf, iou, miou


def border_split(
    cloud: Union[PointCloud, np.ndarray],
    true_labels: Sequence[int],
    neighbors: int = BORDER_NEIGHBORS,
) -> np.ndarray:
    """Flag points with any of their ``neighbors`` nearest neighbours (3D
    Euclidean, distance ties broken by point index) in a different class"""
    xyz = _xyz(cloud)
    labels = np.asarray(true_labels)
    n = len(xyz)
    if n < neighbors + 1:
        raise ShapeError(f"border rule needs at least {neighbors + 1} points, got {n}")
    k = min(n, neighbors + 1 + _TIE_SLACK)
    dist, idx = KDTree(xyz).query(xyz, k=k)
    order = np.lexsort((idx, dist), axis=-1)
    idx = np.take_along_axis(idx, order, axis=1)
    not_self = idx != np.arange(n)[:, None]
    keep = not_self & (np.cumsum(not_self, axis=1) <= neighbors)
    differs = labels[idx] != labels[:, None]
    return np.any(keep & differs, axis=1)


def range_split(cloud: Union[PointCloud, np.ndarray], threshold: float = NEAR_RANGE) -> np.ndarray:
    """Near flags: horizontal range from the sensor strictly below ``threshold``"""
    xyz = _xyz(cloud)
    return np.hypot(xyz[:, 0], xyz[:, 1]) < threshold


def _rate(correct: np.ndarray, mask: np.ndarray) -> float:
    count = int(mask.sum())
    return float(correct[mask].sum() / count) if count else 0.0


def evaluate_points(
    samples: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray]],
    num_classes: int,
    small_classes: Sequence[int] = (),
    large_classes: Sequence[int] = (),
    reference_miou: Optional[float] = None,
    class_names: Optional[List[str]] = None,
) -> EvalReport:
    """Evaluate ``(xyz, true, pred)`` triples, one per frame"""
    trues, preds, borders, nears = [], [], [], []
    for xyz, true, pred in samples:
        trues.append(np.asarray(true, dtype=np.int64))
        preds.append(np.asarray(pred, dtype=np.int64))
        borders.append(border_split(xyz, true))
        nears.append(range_split(xyz))
    true = np.concatenate(trues) if trues else np.zeros(0, dtype=np.int64)
    pred = np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
    border = np.concatenate(borders) if borders else np.zeros(0, dtype=bool)
    near = np.concatenate(nears) if nears else np.zeros(0, dtype=bool)

    conf, iou, miou = confusion_and_miou(pred, true, num_classes)
    correct = pred == true
    everything = np.ones(len(true), dtype=bool)
    small = np.isin(true, list(small_classes))
    large = np.isin(true, list(large_classes))
    rel = miou / reference_miou if reference_miou else None
    return EvalReport(
        confusion=conf,
        per_class_iou=iou,
        miou=miou,
        accuracy=_rate(correct, everything),
        border_acc=_rate(correct, border),
        non_border_acc=_rate(correct, ~border),
        small_obj_acc=_rate(correct, small),
        large_obj_acc=_rate(correct, large),
        near_acc=_rate(correct, near),
        far_acc=_rate(correct, ~near),
        rel_miou=rel,
        populations={
            "points": int(len(true)),
            "border": int(border.sum()),
            "non_border": int((~border).sum()),
            "small": int(small.sum()),
            "large": int(large.sum()),
            "near": int(near.sum()),
            "far": int((~near).sum()),
        },
        class_names=list(class_names or []),
    )

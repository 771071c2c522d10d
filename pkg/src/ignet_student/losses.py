"""
3D-stage loss terms.

supervised cross-entropy on weak-labeled points, mean-teacher KL consistency
on unlabeled points, image-guidance distillation on in-image points and the
one-way contrastive loss pulling out-of-image features toward same-class
guide features.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Set

import numpy as np

from ..ignet_core.errors import NonFiniteLossError, ShapeError
from ..ignet_core.geometry import Correspondence, partition
from ..ignet_core.numerics import (
    ArrayLike,
    Var,
    add,
    kl_rows,
    l2_normalize,
    log_softmax,
    logsumexp,
    matmul,
    mean,
    mul,
    pick,
    reduce_sum,
    sub,
    take,
    value_of,
)
from .network import Prediction

logger = logging.getLogger(__name__)

TERMS = ("ce", "mt", "ig", "cl")

FLAG_EMPTY_IN_IMAGE = "empty_in_image"
FLAG_NO_CONTRASTIVE_PAIRS = "no_contrastive_pairs"


def zero() -> Var:
    return Var(np.zeros(()))


@dataclass
class GuidanceTargets:
    """Frozen guide features on the in-image index set I plus teacher classes on all points"""

    in_index: np.ndarray
    guide_features: np.ndarray
    teacher_classes: np.ndarray

    def __post_init__(self):
        self.in_index = np.asarray(self.in_index, dtype=np.int64).reshape(-1)
        self.guide_features = np.asarray(self.guide_features, dtype=np.float64)
        self.teacher_classes = np.asarray(self.teacher_classes, dtype=np.int64).reshape(-1)
        if self.guide_features.ndim != 2 or len(self.guide_features) != len(self.in_index):
            raise ShapeError(
                f"guide features {self.guide_features.shape} do not cover |I| = {len(self.in_index)}"
            )

    @property
    def num_points(self) -> int:
        return len(self.teacher_classes)

    @property
    def out_index(self) -> np.ndarray:
        inside = np.zeros(self.num_points, dtype=bool)
        inside[self.in_index] = True
        return np.flatnonzero(~inside)

    @classmethod
    def gather(
        cls, corr: Correspondence, feature_grid: np.ndarray, teacher_classes: np.ndarray
    ) -> "GuidanceTargets":
        """Read f_IG at pixel m(x) = (k, l) of every validly projecting point"""
        in_index, _ = partition(corr)
        pixels = corr.pixel[in_index]
        return cls(
            in_index=in_index,
            guide_features=np.asarray(feature_grid)[pixels[:, 1], pixels[:, 0]],
            teacher_classes=teacher_classes,
        )


def supervised_ce(pred: Prediction, labels: ArrayLike, weak_mask: ArrayLike) -> Var:
    """Mean cross-entropy over weak-labeled points (0 when there are none)"""
    labeled = np.flatnonzero(np.asarray(weak_mask, dtype=bool))
    if len(labeled) == 0:
        return zero()
    log_p = log_softmax(take(pred.logits, labeled))
    targets = np.asarray(labels, dtype=np.int64)[labeled]
    return mul(mean(pick(log_p, targets)), -1.0)


def mt_consistency(pred: Prediction, teacher_pred: Prediction, weak_mask: ArrayLike) -> Var:
    """Mean over unlabeled points of KL(softmax(student) || softmax(teacher))"""
    unlabeled = np.flatnonzero(~np.asarray(weak_mask, dtype=bool))
    if len(unlabeled) == 0:
        return zero()
    teacher_logits = value_of(teacher_pred.logits)[unlabeled]
    log_student = log_softmax(take(pred.logits, unlabeled))
    log_teacher = log_softmax(teacher_logits)
    return mean(kl_rows(log_student, log_teacher))


def ig_distill(
    pred: Prediction, guidance: GuidanceTargets, flags: Optional[Set[str]] = None
) -> Var:
    """Mean over I of KL(softmax(f_i) || softmax(f_IG,i)) along the feature axis"""
    if len(guidance.in_index) == 0:
        logger.warning("No in-image points; image guidance contributes nothing", extra={"term": "ig"})
        if flags is not None:
            flags.add(FLAG_EMPTY_IN_IMAGE)
        return zero()
    log_student = log_softmax(take(pred.aux_features, guidance.in_index))
    log_guide = log_softmax(guidance.guide_features)
    return mean(kl_rows(log_student, log_guide))


def one_way_contrastive(
    pred: Prediction,
    guidance: GuidanceTargets,
    tau: float,
    flags: Optional[Set[str]] = None,
) -> Var:
    """Sum over classes c and out-points o in O^(c) of

        -log( 1/|O^(c)| * sum_{i in I^(c)} exp(s_oi) / sum_{i' in I} exp(s_oi') )

    with s_oi = <f_o, f_IG,i> / tau on l2-normalized features. Only the
    student features f_o receive gradient. Classes with an empty I^(c) or
    O^(c) are skipped.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    in_index = guidance.in_index
    out_index = guidance.out_index
    classes = guidance.teacher_classes
    in_classes = classes[in_index]
    out_classes = classes[out_index]
    shared = np.intersect1d(np.unique(in_classes), np.unique(out_classes))
    if len(shared) == 0:
        logger.warning(
            "No class occurs both inside and outside the image; contrastive loss contributes nothing",
            extra={"term": "cl"},
        )
        if flags is not None:
            flags.add(FLAG_NO_CONTRASTIVE_PAIRS)
        return zero()

    guide = guidance.guide_features
    guide_unit = guide / np.maximum(np.linalg.norm(guide, axis=1, keepdims=True), 1e-12)
    out_unit = l2_normalize(take(pred.aux_features, out_index))
    sims = mul(matmul(out_unit, guide_unit.T), 1.0 / tau)
    log_den = logsumexp(sims, axis=1)

    total = zero()
    for c in shared:
        rows = np.flatnonzero(out_classes == c)
        cols = np.flatnonzero(in_classes == c)
        sims_c = take(take(sims, rows, axis=0), cols, axis=1)
        log_num = logsumexp(sims_c, axis=1)
        per_class = reduce_sum(sub(take(log_den, rows), log_num))
        total = add(total, add(per_class, len(rows) * np.log(len(rows))))
    return total


def total_loss(terms: Mapping[str, ArrayLike], lam: float) -> Var:
    """ce + mt + ig + lam * cl over whichever terms are present"""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    values = {name: float(np.sum(value_of(term))) for name, term in terms.items()}
    for name in sorted(values):
        if not np.isfinite(values[name]):
            raise NonFiniteLossError(name, values[name], values)
    total = zero()
    for name in sorted(terms):
        term = terms[name]
        total = add(total, mul(term, lam) if name == "cl" else term)
    return total


@dataclass
class LossBundle:
    """Loss terms of one step and the batch flags they raised"""

    terms: Dict[str, Var]
    total: Var
    flags: Set[str] = field(default_factory=set)

    def values(self) -> Dict[str, float]:
        out = {name: float(value_of(term)) for name, term in self.terms.items()}
        out["total"] = float(value_of(self.total))
        return out


def compose(
    terms: Mapping[str, Var], lam: float, flags: Optional[Sequence[str]] = None
) -> LossBundle:
    terms = dict(terms)
    return LossBundle(terms=terms, total=total_loss(terms, lam), flags=set(flags or ()))

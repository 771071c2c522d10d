"""
Stage-2 training: the 3D student under supervised, mean-teacher,
image-guidance and contrastive losses with optional FOVMix
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..ignet_core.config import RunConfig
from ..ignet_core.errors import ConfigError, NonFiniteLossError, TrainingDivergedError
from ..ignet_core.metrics import RunMetrics
from ..ignet_core.numerics import Tape, grad, runaway, take
from ..ignet_data.dataset import Dataset
from ..ignet_data.frame import Frame, point_features
from ..ignet_guide.model import GuideModel, guide_features
from ..ignet_student.fovmix import MixedSample, fovmix_batch
from ..ignet_student.losses import (
    GuidanceTargets,
    LossBundle,
    compose,
    ig_distill,
    mt_consistency,
    one_way_contrastive,
    supervised_ce,
)
from ..ignet_student.network import Prediction, StudentNet
from ..ignet_student.teacher import (
    TeacherState,
    assign_classes,
    ema_update,
    init_teacher,
    teacher_predict,
)
from .checkpoint import Checkpoint, network_for

logger = logging.getLogger(__name__)

Sample = Union[Frame, MixedSample]


class FeatureCache:
    """Point features per train frame and guide features per image"""

    def __init__(self, frames: Sequence[Frame], max_range: float, guide: Optional[GuideModel]):
        self.frames = frames
        self.max_range = max_range
        self.guide = guide
        self._points: Dict[int, np.ndarray] = {}
        self._pixels: Dict[int, np.ndarray] = {}

    def points(self, index: int) -> np.ndarray:
        if index not in self._points:
            self._points[index] = point_features(self.frames[index].cloud, self.max_range)
        return self._points[index]

    def pixels(self, index: int) -> np.ndarray:
        if index not in self._pixels:
            frame = self.frames[index]
            self._pixels[index] = guide_features(self.guide, frame.image, frame.cam)
        return self._pixels[index]


def draw_batch(
    rng: np.random.Generator, frames: Sequence[Frame], size: int, semi: bool
) -> List[int]:
    """Frame indices of one batch; in semi mode at least one labeled frame is included"""
    size = min(size, len(frames))
    index = [int(i) for i in rng.choice(len(frames), size=size, replace=False)]
    if semi and not any(frames[i].frame_labeled for i in index):
        labeled = [i for i, f in enumerate(frames) if f.frame_labeled]
        if not labeled:
            raise ConfigError("semi-supervised training needs at least one labeled frame")
        index[-1] = int(rng.choice(labeled))
    return index


def build_samples(
    cfg: RunConfig,
    frames: Sequence[Frame],
    index: Sequence[int],
    semi: bool,
    rng: np.random.Generator,
    cache: FeatureCache,
) -> List[Tuple[Sample, np.ndarray, int]]:
    """(sample, point features, index of the frame providing its image) per batch entry"""
    batch = [frames[i] for i in index]
    if not cfg.fovmix:
        return [(frame, cache.points(i), i) for frame, i in zip(batch, index)]
    mixed = fovmix_batch(batch, semi, seed=int(rng.integers(2**32)))
    return [
        (sample, point_features(sample.cloud, cache.max_range), index[sample.pair[0]])
        for sample in mixed
    ]


def _rows(pred: Prediction, start: int, stop: int) -> Prediction:
    rows = np.arange(start, stop)
    return Prediction(logits=take(pred.logits, rows), aux_features=take(pred.aux_features, rows))


def student_losses(
    cfg: RunConfig,
    net: StudentNet,
    params,
    teacher: TeacherState,
    samples: Sequence[Tuple[Sample, np.ndarray, int]],
    cache: FeatureCache,
) -> LossBundle:
    """Loss terms of one batch; the batch is evaluated as one concatenated point set"""
    feats = np.concatenate([f for _, f, _ in samples])
    labels = np.concatenate([s.labels for s, _, _ in samples])
    weak = np.concatenate([s.weak_mask for s, _, _ in samples])
    pred = net.forward(params, feats)
    teacher_pred = teacher_predict(teacher, feats, net)

    terms = {"ce": supervised_ce(pred, labels, weak)}
    flags = set()
    if cfg.mt:
        terms["mt"] = mt_consistency(pred, teacher_pred, weak)
    if cfg.ig:
        teacher_classes = assign_classes(teacher_pred)
        offsets = np.cumsum([0] + [s.num_points for s, _, _ in samples])
        targets = []
        for k, (sample, _, image_index) in enumerate(samples):
            targets.append(
                GuidanceTargets.gather(
                    sample.correspondence(),
                    cache.pixels(image_index),
                    teacher_classes[offsets[k]:offsets[k + 1]],
                )
            )
        batch_targets = GuidanceTargets(
            in_index=np.concatenate([t.in_index + offsets[k] for k, t in enumerate(targets)]),
            guide_features=np.concatenate([t.guide_features for t in targets]),
            teacher_classes=teacher_classes,
        )
        terms["ig"] = ig_distill(pred, batch_targets, flags)
        if cfg.cl:
            parts = [
                one_way_contrastive(_rows(pred, offsets[k], offsets[k + 1]), t, cfg.tau, flags)
                for k, t in enumerate(targets)
            ]
            terms["cl"] = parts[0]
            for part in parts[1:]:
                terms["cl"] = terms["cl"] + part
    return compose(terms, cfg.lam, flags)


def train_student(
    cfg: RunConfig,
    data: Dataset,
    guide: Optional[GuideModel] = None,
    resume: Optional[Checkpoint] = None,
    guide_ref: Tuple[Optional[str], Optional[str]] = (None, None),
    metrics: Optional[RunMetrics] = None,
) -> Checkpoint:
    """Run ``cfg.steps`` plain-SGD steps (continuing from ``resume`` if given).

    Every step draws its batch and augmentation from a generator seeded by
    ``(seed, step)``, so a resumed run repeats the uninterrupted one.
    """
    cfg.validate(guide_available=guide is not None)
    if not data.train:
        raise ConfigError("training split is empty")
    if data.train[0].num_classes != cfg.num_classes:
        raise ConfigError(
            f"dataset has {data.train[0].num_classes} classes, config says {cfg.num_classes}"
        )
    if guide is not None and guide.feature_dim != cfg.feature_dim:
        raise ConfigError(f"guide feature dim {guide.feature_dim} != config feature_dim {cfg.feature_dim}")
    if guide is not None and not cfg.ig:
        logger.info("Guide supplied but image guidance is off; ignoring it")
        guide = None

    net = network_for(cfg)
    if resume is not None:
        resume.params.check_compatible(net.init(np.random.default_rng(0)))
        params, teacher = resume.params.arrays(), resume.teacher
        start, history = resume.step, list(resume.history)
        guide_ref = (resume.guide_path, resume.guide_digest) if guide_ref == (None, None) else guide_ref
    else:
        params = net.init(np.random.default_rng(cfg.seed))
        teacher = init_teacher(params, cfg.alpha)
        start, history = 0, []

    semi = data.semi
    cache = FeatureCache(data.train, data.scene.max_range, guide)
    logger.info(
        f"Training student with toggles {','.join(k for k, v in cfg.toggles.items() if v) or 'none'} "
        f"from step {start} to {cfg.steps}",
        extra={"stage": "student", "seed": cfg.seed, "step": start},
    )
    for step in range(start, cfg.steps):
        if metrics:
            metrics.start_step()
        rng = np.random.default_rng([cfg.seed, step])
        index = draw_batch(rng, data.train, cfg.batch_size, semi)
        samples = build_samples(cfg, data.train, index, semi, rng, cache)

        with Tape():
            live = params.track()
            try:
                bundle = student_losses(cfg, net, live, teacher, samples, cache)
            except NonFiniteLossError as e:
                if metrics:
                    metrics.record_step("student", e.value, success=False)
                raise TrainingDivergedError("student", step, e.terms) from e
            values = bundle.values()
            if runaway(values["total"]):
                if metrics:
                    metrics.record_step("student", values["total"], success=False)
                raise TrainingDivergedError("student", step, values, reason="loss out of range")
            gradient = grad(bundle.total, live)

        params = params.axpy(-cfg.lr, gradient)
        if not params.all_finite():
            if metrics:
                metrics.record_step("student", values["total"], success=False)
            raise TrainingDivergedError("student", step, values, reason="non-finite weights")
        teacher = ema_update(teacher, params)
        history.append({"step": step, **values})
        if metrics:
            metrics.record_step("student", values["total"])
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            breakdown = " ".join(f"{k}={v:.5f}" for k, v in values.items())
            logger.info(
                f"student step {step}: {breakdown}",
                extra={"stage": "student", "step": step, "loss": values["total"]},
            )
        for flag in sorted(bundle.flags):
            logger.debug(f"step {step} flagged {flag}", extra={"stage": "student", "step": step})

    return Checkpoint(
        params=params,
        teacher=teacher,
        config=cfg,
        step=max(cfg.steps, start),
        history=history,
        guide_path=guide_ref[0],
        guide_digest=guide_ref[1],
    )

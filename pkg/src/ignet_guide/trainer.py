"""
Guide training loop (mean teacher with pseudo-label domain adaptation),
checkpoint I/O and guide-mode comparison
"""

import hashlib
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..ignet_core.config import GUIDE_MODES, GuideConfig
from ..ignet_core.containers import encode_arrays, read_arrays, write_arrays
from ..ignet_core.errors import CheckpointError, TrainingDivergedError
from ..ignet_core.metrics import RunMetrics
from ..ignet_core.numerics import ParamVector, Tape, grad, runaway
from ..ignet_data.frame import SKY, Frame
from ..ignet_student.teacher import ema_update, init_teacher
from .model import GuideModel, PseudoLabelMap, da_loss, make_pseudo_labels, predict_pixels

logger = logging.getLogger(__name__)

GUIDE_KIND = "guide"


def _uses_source(mode: str) -> bool:
    return mode != "weak-only"


def _uses_target(mode: str) -> bool:
    return mode != "source-only"


def _refresh_pseudo(
    mode: str, teacher: Optional[GuideModel], frames: Sequence[Frame]
) -> List[PseudoLabelMap]:
    if mode == "weak-only":
        return [make_pseudo_labels(None, f, project_weak=True) for f in frames]
    return [make_pseudo_labels(teacher, f, project_weak=(mode == "wda")) for f in frames]


def train_guide(
    source_frames: Sequence[Frame],
    target_frames: Sequence[Frame],
    cfg: GuideConfig,
    num_classes: int,
    metrics: Optional[RunMetrics] = None,
) -> GuideModel:
    """Train the 2D network and return it frozen.

    Each step draws one source and one target frame from a generator seeded
    by ``(seed, step)``. Pseudo-labels are refreshed from the EMA teacher
    once per pass over the target frames.
    """
    cfg.validate()
    mode = cfg.mode
    if _uses_source(mode) and not source_frames:
        raise ValueError(f"guide mode '{mode}' needs source frames")
    if _uses_target(mode) and not target_frames:
        raise ValueError(f"guide mode '{mode}' needs target frames")

    model = GuideModel.init(np.random.default_rng(cfg.seed), num_classes, cfg.feature_dim, cfg.hidden)
    params = model.parameters()
    teacher = init_teacher(params, cfg.alpha)
    lambda_p = cfg.lambda_p if mode == "wda" else 1.0
    epoch = max(1, len(target_frames))
    pseudo: List[PseudoLabelMap] = []

    logger.info(
        f"Training guide ({mode}) for {cfg.steps} steps, {params.count()} parameters",
        extra={"stage": "guide", "seed": cfg.seed},
    )
    for step in range(cfg.steps):
        if metrics:
            metrics.start_step()
        if _uses_target(mode) and (step % epoch == 0 or not pseudo):
            pseudo = _refresh_pseudo(mode, model.with_parameters(teacher.shadow), target_frames)

        rng = np.random.default_rng([cfg.seed, step])
        src = [source_frames[rng.integers(len(source_frames))]] if _uses_source(mode) else []
        tgt_index = [int(rng.integers(len(target_frames)))] if _uses_target(mode) else []

        with Tape():
            live = params.track()
            loss = da_loss(
                model.with_parameters(live),
                src,
                [target_frames[i] for i in tgt_index],
                [pseudo[i] for i in tgt_index],
                lambda_p,
            )
            value = loss.item()
            if runaway(value):
                if metrics:
                    metrics.record_step("guide", value, success=False)
                raise TrainingDivergedError("guide", step, {"da_loss": value})
            gradient = grad(loss, live)

        params = params.axpy(-cfg.lr, gradient)
        if not params.all_finite():
            if metrics:
                metrics.record_step("guide", value, success=False)
            raise TrainingDivergedError("guide", step, {"da_loss": value}, reason="non-finite weights")
        teacher = ema_update(teacher, params)
        if metrics:
            metrics.record_step("guide", value)
        if cfg.log_every and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            logger.info(
                f"guide step {step}: loss {value:.5f}",
                extra={"stage": "guide", "step": step, "loss": value},
            )

    return model.with_parameters(params).frozen()


def pixel_accuracy(model: GuideModel, frames: Sequence[Frame]) -> float:
    """Fraction of non-sky pixels whose argmax class matches the dense class map"""
    correct = total = 0
    for frame in frames:
        keep = frame.class_map != SKY
        pred = predict_pixels(model, frame.image)
        correct += int((pred[keep] == frame.class_map[keep]).sum())
        total += int(keep.sum())
    return correct / total if total else 0.0


def _meta(model: GuideModel, extra: Optional[Dict] = None) -> Dict:
    meta = {
        "kind": GUIDE_KIND,
        "num_classes": model.num_classes,
        "feature_dim": model.feature_dim,
        "hidden": model.hidden,
    }
    meta.update(extra or {})
    return meta


def guide_digest(model: GuideModel) -> str:
    """Content hash of the guide weights and layout"""
    blob = encode_arrays(dict(model.parameters().arrays().items()), _meta(model))
    return hashlib.sha256(blob).hexdigest()


def save_guide(path: Union[str, Path], model: GuideModel, extra: Optional[Dict] = None) -> Path:
    return write_arrays(path, dict(model.parameters().arrays().items()), _meta(model, extra))


def load_guide(path: Union[str, Path]) -> GuideModel:
    arrays, meta = read_arrays(path)
    if meta.get("kind") != GUIDE_KIND:
        raise CheckpointError(f"{path} is not a guide checkpoint (kind={meta.get('kind')!r})")
    try:
        layout = GuideModel.init(
            np.random.default_rng(0),
            int(meta["num_classes"]),
            int(meta["feature_dim"]),
            int(meta["hidden"]),
        )
    except KeyError as e:
        raise CheckpointError(f"guide checkpoint metadata lacks {e}") from e
    params = ParamVector(arrays)
    if not layout.parameters().compatible(params):
        raise CheckpointError(f"guide weights in {path} do not match the recorded layout")
    return layout.with_parameters(params).frozen()


def compare_guide_modes(
    source_frames: Sequence[Frame],
    target_frames: Sequence[Frame],
    eval_frames: Sequence[Frame],
    cfg: GuideConfig,
    num_classes: int,
    seeds: Sequence[int],
    modes: Sequence[str] = GUIDE_MODES,
) -> Dict[str, Dict[str, float]]:
    """Mean and per-seed target pixel accuracy of every guide mode"""
    results: Dict[str, Dict[str, float]] = {}
    for mode in modes:
        scores = []
        for seed in seeds:
            run_cfg = replace(cfg, mode=mode, seed=int(seed))
            model = train_guide(source_frames, target_frames, run_cfg, num_classes)
            scores.append(pixel_accuracy(model, eval_frames))
        results[mode] = {"mean": float(np.mean(scores)), **{f"seed{s}": v for s, v in zip(seeds, scores)}}
        logger.info(
            f"guide mode {mode}: mean target pixel accuracy {results[mode]['mean']:.4f}",
            extra={"stage": "ablate-guide"},
        )
    return results

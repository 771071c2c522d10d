"""
Dataset splits: generation, on-disk layout and loading.

Layout: ``DIR/dataset.yaml`` (manifest), ``DIR/source/*.fdf`` (source
domain, dense class maps), ``DIR/train/*.fdf`` (target domain, weak or
semi-supervised labels), ``DIR/val/*.fdf`` (target domain, dense labels).
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..ignet_core.config import SceneConfig, dump_yaml, load_yaml
from .frame import Frame
from .frame_io import read_frame, write_frame
from .scene import gen_scene, with_domain
from .weak_labels import mark_labeled, sample_frames, scribble_sim

logger = logging.getLogger(__name__)

SPLITS = ("source", "train", "val")
MANIFEST = "dataset.yaml"


@dataclass
class Dataset:
    """Source, train and validation frames plus the generating manifest"""

    source: List[Frame]
    train: List[Frame]
    val: List[Frame]
    scene: SceneConfig = field(default_factory=SceneConfig)
    manifest: Dict[str, Any] = field(default_factory=dict)

    @property
    def semi(self) -> bool:
        return self.manifest.get("semi_rate") is not None

    def densely_labeled(self) -> "Dataset":
        return replace(self, train=[f.densely_labeled() for f in self.train])


def generate_dataset(
    frames: int,
    seed: int,
    scene: Optional[SceneConfig] = None,
    semi_rate: Optional[float] = None,
    scribble_budget: Optional[float] = None,
    val_frames: Optional[int] = None,
    source_frames: Optional[int] = None,
) -> Dataset:
    """Generate all splits deterministically from ``seed``.

    Train frames carry scribbles when ``scribble_budget`` is set and are
    thinned to uniformly sampled labeled frames when ``semi_rate`` is set.
    """
    scene = (scene or SceneConfig()).validate()
    target_cfg = with_domain(scene, "target")
    source_cfg = with_domain(scene, "source")
    n_val = val_frames if val_frames is not None else max(2, frames // 5)
    n_source = source_frames if source_frames is not None else frames

    source = [gen_scene((seed, 0, i), source_cfg) for i in range(n_source)]
    train = [gen_scene((seed, 1, i), target_cfg) for i in range(frames)]
    val = [gen_scene((seed, 2, i), target_cfg) for i in range(n_val)]
    logger.info(f"Generated {n_source} source, {frames} train and {n_val} val frames", extra={"seed": seed})

    if scribble_budget is not None:
        train = [
            scribble_sim(frame, scribble_budget, seed=seed * 1_000_003 + i)
            for i, frame in enumerate(train)
        ]
    if semi_rate is not None:
        flags = sample_frames(train, semi_rate, seed)
        train = mark_labeled(train, flags)
        logger.info(f"Semi-supervised split keeps {int(flags.sum())} of {len(train)} frames labeled")

    manifest = {
        "seed": seed,
        "frames": frames,
        "val_frames": n_val,
        "source_frames": n_source,
        "semi_rate": semi_rate,
        "scribble_budget": scribble_budget,
        "mode": _mode(semi_rate, scribble_budget),
        "scene": scene.to_dict(),
    }
    return Dataset(source=source, train=train, val=val, scene=scene, manifest=manifest)


def _mode(semi_rate: Optional[float], scribble_budget: Optional[float]) -> str:
    if semi_rate is not None and scribble_budget is not None:
        return "semi+weak"
    if semi_rate is not None:
        return "semi"
    if scribble_budget is not None:
        return "weak"
    return "dense"


def write_dataset(root: Union[str, Path], data: Dataset) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        # an existing dataset directory is replaced, not merged
        for stale in sorted((root / split).glob("*.fdf")):
            stale.unlink()
        for i, frame in enumerate(getattr(data, split)):
            write_frame(root / split / f"frame_{i:05d}.fdf", frame)
    (root / MANIFEST).write_text(dump_yaml(data.manifest), encoding="utf-8")
    return root


def load_dataset(root: Union[str, Path]) -> Dataset:
    root = Path(root)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"dataset manifest does not exist: {manifest_path}")
    manifest = load_yaml(manifest_path)
    scene = SceneConfig.from_dict(manifest.get("scene", {}))
    splits = {}
    for split in SPLITS:
        paths = sorted((root / split).glob("*.fdf"))
        splits[split] = [read_frame(p) for p in paths]
    return Dataset(scene=scene, manifest=manifest, **splits)

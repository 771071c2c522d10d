"""
Command-line interface: data generation, guide and student training,
evaluation and ablations
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple

from ..ignet_core.config import RunConfig, load_run_config, load_scene_config
from ..ignet_core.errors import ConfigError, IgnetError
from ..ignet_core.logging import setup_logging
from ..ignet_core.metrics import RunMetrics
from ..ignet_data.dataset import generate_dataset, load_dataset, write_dataset
from ..ignet_eval.report import format_table, palette_from_colors, write_bev_ppm, write_report
from ..ignet_guide.trainer import compare_guide_modes, guide_digest, load_guide, save_guide, train_guide
from .ablation import format_guide_comparison, run_ablation, write_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import evaluate, predict_frames
from .training import train_student

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_DIVERGED = 5
EXIT_FORMAT = 6

_EXIT_BY_CATEGORY = {
    "config": EXIT_CONFIG,
    "diverged": EXIT_DIVERGED,
    "format": EXIT_FORMAT,
}

EXIT_CODES_HELP = """exit codes:
  0  success
  1  unexpected error, including shape and camera errors
  2  usage error
  3  missing input file
  4  invalid configuration
  5  training diverged
  6  malformed frame or checkpoint file
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ignet",
        description="Image-guided weakly supervised LiDAR segmentation",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"]
    )
    parser.add_argument("--log-file", help="JSON log file (console only when omitted)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate a synthetic dataset directory")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--frames", type=int, help="Number of train frames (default from --config)")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--semi", type=float, help="Fraction of labeled train frames")
    gen.add_argument("--scribble", type=float, help="Fraction of scribble-labeled points")
    gen.add_argument("--val-frames", type=int, help="Validation frames (default frames // 5, at least 2)")
    gen.add_argument("--source-frames", type=int, help="Source-domain frames (default --frames)")
    gen.add_argument("--scene", help="Scene configuration file")
    gen.add_argument("--config", help="Run configuration file supplying split sizes and label rates")

    guide = sub.add_parser("train-guide", help="Train and freeze the 2D guide network")
    guide.add_argument("--data", required=True)
    guide.add_argument("--out", required=True)
    guide.add_argument("--config", help="Run configuration file")
    guide.add_argument("--mode", choices=["source-only", "weak-only", "uda", "wda"])
    guide.add_argument("--seed", type=int)
    guide.add_argument("--steps", type=int)

    student = sub.add_parser("train-student", help="Train the 3D student")
    student.add_argument("--data", required=True)
    student.add_argument("--out", required=True)
    student.add_argument("--guide", help="Frozen guide checkpoint (required for ig)")
    student.add_argument("--toggles", help="Comma list of mt,ig,cl,fovmix (overrides the config)")
    student.add_argument("--config", help="Run configuration file")
    student.add_argument("--seed", type=int)
    student.add_argument("--steps", type=int)
    student.add_argument("--resume", help="Checkpoint to continue from")

    ev = sub.add_parser("eval", help="Evaluate a student checkpoint on the validation split")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--use-teacher", action="store_true", help="Evaluate the EMA teacher weights")
    ev.add_argument("--reference-miou", type=float, help="Dense-supervision mIoU for rel mIoU")
    ev.add_argument("--bev", help="Write a truth/prediction BEV image of the first frame")

    ablate = sub.add_parser("ablate", help="Component ablation over seeds")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--seeds", type=int, default=5)
    ablate.add_argument("--config", help="Run configuration file")

    ablate_guide = sub.add_parser("ablate-guide", help="Guide training mode comparison over seeds")
    ablate_guide.add_argument("--data", required=True)
    ablate_guide.add_argument("--out", required=True)
    ablate_guide.add_argument("--seeds", type=int, default=5)
    ablate_guide.add_argument("--config", help="Run configuration file")
    return parser


def _run_config(path: Optional[str], base: Optional[RunConfig] = None, **overrides: Any) -> RunConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if path:
        return load_run_config(path, **overrides)
    data = (base or RunConfig()).to_dict()
    data.update(overrides)
    return RunConfig.from_dict(data)


def _cmd_gen_data(args, metrics: RunMetrics) -> int:
    cfg = _run_config(args.config, seed=args.seed, train_frames=args.frames)
    semi_rate, scribble = args.semi, args.scribble
    if args.config and semi_rate is None and scribble is None:
        semi_rate = cfg.semi_rate
        scribble = cfg.scribble_budget
    if cfg.train_frames < 1:
        raise ConfigError(f"--frames must be positive, got {cfg.train_frames}")
    scene = load_scene_config(args.scene) if args.scene else None
    data = generate_dataset(
        cfg.train_frames,
        cfg.seed,
        scene=scene,
        semi_rate=semi_rate,
        scribble_budget=scribble,
        val_frames=args.val_frames if args.val_frames is not None else cfg.val_frames,
        source_frames=args.source_frames if args.source_frames is not None else cfg.source_frames,
    )
    write_dataset(args.out, data)
    logger.info(f"Wrote dataset to {args.out}", extra={"seed": cfg.seed})
    return EXIT_OK


def _cmd_train_guide(args, metrics: RunMetrics) -> int:
    data = load_dataset(args.data)
    cfg = _run_config(
        args.config,
        num_classes=data.scene.num_classes,
        seed=args.seed,
        guide_steps=args.steps,
        guide_mode=args.mode,
    )
    guide_cfg = cfg.guide_config()
    model = train_guide(data.source, data.train, guide_cfg, cfg.num_classes, metrics=metrics)
    save_guide(args.out, model, {"mode": guide_cfg.mode, "seed": guide_cfg.seed, "steps": guide_cfg.steps})
    logger.info(f"Saved guide to {args.out}", extra={"stage": "guide"})
    return EXIT_OK


def _cmd_train_student(args, metrics: RunMetrics) -> int:
    data = load_dataset(args.data)
    resume = load_checkpoint(args.resume) if args.resume else None
    cfg = _run_config(
        args.config,
        base=resume.config if resume else None,
        num_classes=data.scene.num_classes,
        seed=args.seed,
        steps=args.steps,
    )
    if args.toggles is not None:
        cfg = cfg.with_toggles(args.toggles)
    guide, guide_ref = None, (None, None)
    if args.guide:
        guide = load_guide(args.guide)
        guide_ref = (str(args.guide), guide_digest(guide))
    ckpt = train_student(cfg, data, guide, resume=resume, guide_ref=guide_ref, metrics=metrics)
    save_checkpoint(args.out, ckpt)
    logger.info(f"Saved student checkpoint to {args.out}", extra={"stage": "student"})
    return EXIT_OK


def _cmd_eval(args, metrics: RunMetrics) -> int:
    ckpt = load_checkpoint(args.ckpt)
    data = load_dataset(args.data)
    report = evaluate(
        ckpt, data.val, data.scene, use_teacher=args.use_teacher, reference_miou=args.reference_miou
    )
    write_report(report, args.report)
    if args.bev and data.val:
        frame = data.val[0]
        pred = predict_frames(ckpt, [frame], data.scene.max_range, args.use_teacher)[0]
        palette = palette_from_colors([c.color for c in data.scene.classes])
        write_bev_ppm(args.bev, frame.cloud.xyz, frame.labels, pred, extent=data.scene.max_range, palette=palette)
    sys.stdout.write(format_table(report))
    return EXIT_OK


def _cmd_ablate(args, metrics: RunMetrics) -> int:
    data = load_dataset(args.data)
    cfg = _run_config(args.config, num_classes=data.scene.num_classes)
    table = run_ablation(cfg, data, seeds=range(args.seeds), metrics=metrics)
    write_ablation(table, args.out)
    logger.info(f"Wrote ablation table to {args.out}", extra={"stage": "ablate"})
    return EXIT_OK


def _cmd_ablate_guide(args, metrics: RunMetrics) -> int:
    data = load_dataset(args.data)
    cfg = _run_config(args.config, num_classes=data.scene.num_classes)
    results = compare_guide_modes(
        data.source, data.train, data.val, cfg.guide_config(), cfg.num_classes, seeds=list(range(args.seeds))
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_guide_comparison(results), encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-guide": _cmd_train_guide,
    "train-student": _cmd_train_student,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "ablate-guide": _cmd_ablate_guide,
}


def classify(exc: BaseException) -> Tuple[int, str]:
    """Exit code and diagnostic category for an exception"""
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING_FILE, "missing-file"
    if isinstance(exc, IgnetError):
        return _EXIT_BY_CATEGORY.get(exc.category, EXIT_UNEXPECTED), exc.category
    return EXIT_UNEXPECTED, "unexpected"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    setup_logging(args.log_level, args.log_file or "")
    metrics = RunMetrics()
    try:
        code = COMMANDS[args.command](args, metrics)
    except Exception as e:
        code, category = classify(e)
        message = f"error[{category}]: {str(e).splitlines()[0] if str(e) else type(e).__name__}"
        logger.error(message, exc_info=code == EXIT_UNEXPECTED)
        sys.stderr.write(message + "\n")
        return code
    if metrics.step_count:
        logger.info(f"Run metrics: {metrics.get_metrics()}")
    return code

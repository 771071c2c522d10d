"""
Report writers: aligned text table, key=value file and BEV pixmap
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .metrics import EvalReport

DEFAULT_PALETTE = np.array(
    [
        [115, 102, 84],
        [204, 46, 41],
        [51, 77, 217],
        [140, 184, 77],
        [230, 170, 40],
        [150, 60, 170],
        [40, 170, 170],
        [120, 120, 120],
    ],
    dtype=np.uint8,
)


def _fmt(value: float) -> str:
    return "nan" if value is None or np.isnan(value) else f"{value:.4f}"


def format_table(report: EvalReport) -> str:
    """Aligned plain-text rendering of an evaluation report"""
    names = report.class_names or [str(c) for c in range(len(report.per_class_iou))]
    width = max([len(n) for n in names] + [14])
    lines = [f"{'metric':<{width}}  value", "-" * (width + 10)]
    rows = [
        ("mIoU", report.miou),
        ("rel mIoU", report.rel_miou),
        ("accuracy", report.accuracy),
        ("border", report.border_acc),
        ("non-border", report.non_border_acc),
        ("small objects", report.small_obj_acc),
        ("large objects", report.large_obj_acc),
        ("0-25m", report.near_acc),
        ("25m+", report.far_acc),
    ]
    for label, value in rows:
        if value is None:
            continue
        lines.append(f"{label:<{width}}  {_fmt(value)}")
    lines.append("")
    lines.append(f"{'class':<{width}}  IoU")
    lines.append("-" * (width + 10))
    for name, iou in zip(names, report.per_class_iou):
        lines.append(f"{name:<{width}}  {_fmt(iou)}")
    return "\n".join(lines) + "\n"


def format_key_values(report: EvalReport) -> str:
    items = report.as_dict()
    lines = []
    for key in sorted(items):
        value = items[key]
        if isinstance(value, (int, np.integer)):
            lines.append(f"{key}={int(value)}")
        else:
            lines.append(f"{key}={float(value):.10g}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """Write the text table to ``path`` and key=value pairs next to it (``.kv``)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(report), encoding="utf-8")
    path.with_suffix(path.suffix + ".kv").write_text(format_key_values(report), encoding="utf-8")
    return path


def bev_raster(
    xyz: np.ndarray,
    classes: np.ndarray,
    extent: float = 50.0,
    resolution: float = 0.5,
    palette: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Top-down RGB raster of class colors, x pointing up"""
    palette = DEFAULT_PALETTE if palette is None else np.asarray(palette, dtype=np.uint8)
    size = int(round(2 * extent / resolution))
    image = np.zeros((size, size, 3), dtype=np.uint8)
    row = ((extent - xyz[:, 0]) / resolution).astype(np.int64)
    col = ((extent - xyz[:, 1]) / resolution).astype(np.int64)
    inside = (row >= 0) & (row < size) & (col >= 0) & (col < size)
    colors = palette[np.asarray(classes)[inside] % len(palette)]
    image[row[inside], col[inside]] = colors
    return image


def write_bev_ppm(
    path: Union[str, Path],
    xyz: np.ndarray,
    true: Sequence[int],
    pred: Sequence[int],
    extent: float = 50.0,
    resolution: float = 0.5,
    palette: Optional[np.ndarray] = None,
) -> Path:
    """Binary PPM with ground truth (left) and prediction (right) side by side"""
    left = bev_raster(xyz, np.asarray(true), extent, resolution, palette)
    right = bev_raster(xyz, np.asarray(pred), extent, resolution, palette)
    separator = np.full((left.shape[0], 2, 3), 255, dtype=np.uint8)
    image = np.concatenate([left, separator, right], axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + image.tobytes())
    return path


def palette_from_colors(colors: Sequence[Sequence[float]]) -> np.ndarray:
    """0..1 class colors to an 8-bit palette"""
    return np.clip(np.round(np.asarray(colors, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)

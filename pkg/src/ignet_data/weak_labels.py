"""
Weak-label simulators: scribble-like point annotations and semi-supervised
frame sampling
"""

import logging
import math
from typing import List, Sequence

import numpy as np

from ..ignet_eval.metrics import border_split
from .frame import Frame

logger = logging.getLogger(__name__)

DEFAULT_MAX_SCRIBBLE = 24
DEFAULT_MAX_GAP = 1.5


def scan_line_runs(frame: Frame, eligible: np.ndarray, max_gap: float = DEFAULT_MAX_GAP) -> List[np.ndarray]:
    """Maximal runs of consecutive eligible points that share a label and lie
    within ``max_gap`` meters of their scan-line predecessor"""
    xyz = frame.cloud.xyz
    n = len(xyz)
    if n == 0:
        return []
    step = np.linalg.norm(np.diff(xyz, axis=0), axis=1)
    joined = (
        eligible[1:]
        & eligible[:-1]
        & (frame.labels[1:] == frame.labels[:-1])
        & (step < max_gap)
    )
    runs = []
    start = None
    for i in range(n):
        if not eligible[i]:
            continue
        if start is None:
            start = i
        if i == n - 1 or not joined[i]:
            runs.append(np.arange(start, i + 1))
            start = None
    return runs


def scribble_sim(
    frame: Frame,
    budget: float,
    seed: int,
    max_length: int = DEFAULT_MAX_SCRIBBLE,
    max_gap: float = DEFAULT_MAX_GAP,
) -> Frame:
    """Label about ``budget`` of the points with scribble-like runs.

    Scribbles are contiguous pieces of scan lines inside one class region and
    never touch a border point. When not enough non-border points exist, all
    of them are labeled and the attained fraction is logged.
    """
    if not 0.0 < budget < 1.0:
        raise ValueError(f"scribble budget must lie in (0, 1), got {budget}")
    n = frame.num_points
    target = int(round(budget * n))
    weak = np.zeros(n, dtype=bool)
    if target == 0:
        return frame.with_weak_mask(weak, frame_labeled=True)

    eligible = ~border_split(frame.cloud, frame.labels)
    if eligible.sum() < target:
        weak = eligible.copy()
        logger.warning(
            f"Scribble budget {budget:.3f} unattainable; labeled all non-border points "
            f"({weak.mean():.4f} of the frame)"
        )
        return frame.with_weak_mask(weak, frame_labeled=True)

    chunks = []
    for run in scan_line_runs(frame, eligible, max_gap):
        for begin in range(0, len(run), max_length):
            chunks.append(run[begin:begin + max_length])
    rng = np.random.default_rng(seed)
    remaining = target
    for index in rng.permutation(len(chunks)):
        chunk = chunks[index]
        if remaining <= 0:
            break
        take = chunk[:remaining]
        weak[take] = True
        remaining -= len(take)
    return frame.with_weak_mask(weak, frame_labeled=True)


def sample_frames(frames: Sequence[Frame], rate: float, seed: int = 0) -> np.ndarray:
    """Flags of ceil(rate * count) uniformly spaced labeled frames.

    Indices are ``phase + floor(i * count / n)`` with the phase chosen by the
    seed inside the first stride (phase 0 for seed 0).
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sampling rate must lie in (0, 1], got {rate}")
    count = len(frames)
    flags = np.zeros(count, dtype=bool)
    if count == 0:
        return flags
    n = min(count, max(1, math.ceil(rate * count - 1e-9)))
    stride = count // n
    phase = seed % stride if stride > 1 else 0
    index = phase + (np.arange(n) * count) // n
    flags[np.minimum(index, count - 1)] = True
    return flags


def mark_labeled(frames: Sequence[Frame], flags: np.ndarray) -> List[Frame]:
    """Apply frame flags: unlabeled frames lose their weak labels"""
    out = []
    for frame, labeled in zip(frames, flags):
        if labeled:
            out.append(frame.with_weak_mask(frame.weak_mask, frame_labeled=True))
        else:
            out.append(frame.with_weak_mask(np.zeros(frame.num_points, dtype=bool), frame_labeled=False))
    return out

"""
Component ablation: six toggle rows plus a dense-label reference, each
averaged over seeds, with the border / object / range split of MT against
MT+IG
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..ignet_core.config import RunConfig, parse_toggles
from ..ignet_core.metrics import RunMetrics
from ..ignet_data.dataset import Dataset
from ..ignet_guide.model import GuideModel
from ..ignet_guide.trainer import train_guide
from ..ignet_eval.metrics import EvalReport
from .evaluation import evaluate
from .training import train_student

logger = logging.getLogger(__name__)

ABLATION_ROWS: Tuple[Tuple[str, str], ...] = (
    ("baseline", ""),
    ("mt", "mt"),
    ("mt+ig", "mt,ig"),
    ("mt+ig+cl", "mt,ig,cl"),
    ("mt+ig+fovmix", "mt,ig,fovmix"),
    ("mt+ig+cl+fovmix", "mt,ig,cl,fovmix"),
)
REFERENCE_ROW = "dense"
SPLIT_ROWS = ("mt", "mt+ig")
SPLIT_METRICS = ("border_acc", "non_border_acc", "small_obj_acc", "large_obj_acc", "near_acc", "far_acc")


@dataclass
class AblationRow:
    name: str
    toggles: Dict[str, bool]
    per_seed_miou: List[float]
    miou: float
    rel: float = 0.0
    delta_rel: float = 0.0
    split: Dict[str, float] = field(default_factory=dict)


@dataclass
class AblationTable:
    rows: List[AblationRow]
    reference: AblationRow
    seeds: List[int]

    def row(self, name: str) -> AblationRow:
        for row in [self.reference, *self.rows]:
            if row.name == name:
                return row
        raise KeyError(name)


def _mean_split(reports: Sequence[EvalReport]) -> Dict[str, float]:
    return {m: float(np.mean([getattr(r, m) for r in reports])) for m in SPLIT_METRICS}


def run_ablation(
    cfg: RunConfig,
    data: Dataset,
    seeds: Sequence[int],
    rows: Sequence[Tuple[str, str]] = ABLATION_ROWS,
    guides: Optional[Dict[int, GuideModel]] = None,
    metrics: Optional[RunMetrics] = None,
) -> AblationTable:
    """Train and evaluate every row for every seed.

    A guide is trained per seed unless supplied through ``guides``. Relative
    scores divide the row's mean mIoU by that of a fully supervised run.
    """
    seeds = [int(s) for s in seeds]
    guides = dict(guides or {})
    dense_data = data.densely_labeled()
    reports: Dict[str, List[EvalReport]] = {REFERENCE_ROW: []}
    for name, _ in rows:
        reports[name] = []

    for seed in seeds:
        base = replace(cfg, seed=seed)
        needs_guide = any(parse_toggles(toggles)["ig"] for _, toggles in rows)
        if needs_guide and seed not in guides:
            guides[seed] = train_guide(
                data.source, data.train, base.guide_config(), base.num_classes, metrics=metrics
            )

        ref_ckpt = train_student(base.with_toggles(""), dense_data, metrics=metrics)
        reports[REFERENCE_ROW].append(evaluate(ref_ckpt, data.val, data.scene))
        for name, toggles in rows:
            run_cfg = base.with_toggles(toggles)
            guide = guides.get(seed) if run_cfg.ig else None
            ckpt = train_student(run_cfg, data, guide, metrics=metrics)
            report = evaluate(ckpt, data.val, data.scene)
            reports[name].append(report)
            logger.info(
                f"ablation seed {seed} row {name}: mIoU {report.miou:.4f}",
                extra={"stage": "ablate", "seed": seed},
            )

    def summarize(name: str, toggles: str) -> AblationRow:
        per_seed = [r.miou for r in reports[name]]
        return AblationRow(
            name=name,
            toggles=parse_toggles(toggles),
            per_seed_miou=per_seed,
            miou=float(np.mean(per_seed)),
            split=_mean_split(reports[name]),
        )

    reference = summarize(REFERENCE_ROW, "")
    table_rows = [summarize(name, toggles) for name, toggles in rows]
    ref = reference.miou
    reference.rel = 1.0
    for row in table_rows:
        row.rel = row.miou / ref if ref > 0 else 0.0
    baseline_rel = table_rows[0].rel if table_rows else 0.0
    for row in table_rows:
        row.delta_rel = row.rel - baseline_rel
    return AblationTable(rows=table_rows, reference=reference, seeds=seeds)


def format_ablation(table: AblationTable) -> str:
    lines = [f"seeds: {','.join(str(s) for s in table.seeds)}", ""]
    header = f"{'MT':>3} {'IG':>3} {'CL':>3} {'FOVMix':>6}  {'mIoU':>7} {'rel':>7} {'drel':>7}"
    lines += [header, "-" * len(header)]
    for row in table.rows:
        marks = ["x" if row.toggles[t] else "" for t in ("mt", "ig", "cl", "fovmix")]
        lines.append(
            f"{marks[0]:>3} {marks[1]:>3} {marks[2]:>3} {marks[3]:>6}  "
            f"{100 * row.miou:7.2f} {100 * row.rel:7.2f} {100 * row.delta_rel:+7.2f}"
        )
    lines.append(f"{'dense reference':<19}  {100 * table.reference.miou:7.2f} {100.0:7.2f}")
    lines.append("")

    present = [n for n in SPLIT_ROWS if any(r.name == n for r in table.rows)]
    if len(present) == 2:
        lines.append(f"{'split':<16}" + "".join(f"{n:>10}" for n in present) + f"{'delta':>10}")
        lines.append("-" * (16 + 10 * (len(present) + 1)))
        before, after = (table.row(n).split for n in present)
        for metric in SPLIT_METRICS:
            lines.append(
                f"{metric:<16}{100 * before[metric]:10.2f}{100 * after[metric]:10.2f}"
                f"{100 * (after[metric] - before[metric]):+10.2f}"
            )
    return "\n".join(lines) + "\n"


def ablation_key_values(table: AblationTable) -> str:
    items = {f"{REFERENCE_ROW}.miou": table.reference.miou}
    for row in table.rows:
        items[f"{row.name}.miou"] = row.miou
        items[f"{row.name}.rel"] = row.rel
        items[f"{row.name}.delta_rel"] = row.delta_rel
        for metric, value in row.split.items():
            items[f"{row.name}.{metric}"] = value
    return "".join(f"{k}={float(v):.10g}\n" for k, v in sorted(items.items()))


def write_ablation(table: AblationTable, path: Union[str, Path]) -> Path:
    """Text table at ``path`` and key=value pairs at ``path`` + ``.kv``"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_ablation(table), encoding="utf-8")
    path.with_suffix(path.suffix + ".kv").write_text(ablation_key_values(table), encoding="utf-8")
    return path


def format_guide_comparison(results: Dict[str, Dict[str, float]]) -> str:
    lines = [f"{'guide mode':<12} {'target pixel acc':>18}", "-" * 31]
    for mode, scores in results.items():
        lines.append(f"{mode:<12} {100 * scores['mean']:18.2f}")
    return "\n".join(lines) + "\n"

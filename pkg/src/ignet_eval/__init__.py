"""
ignet eval - segmentation metrics and report writers
"""

from .metrics import EvalReport, border_split, confusion_and_miou, evaluate_points, range_split
from .report import format_key_values, format_table, write_bev_ppm, write_report

__version__ = "1.0.0"
__all__ = [
    "EvalReport",
    "border_split",
    "confusion_and_miou",
    "evaluate_points",
    "format_key_values",
    "format_table",
    "range_split",
    "write_bev_ppm",
    "write_report",
]

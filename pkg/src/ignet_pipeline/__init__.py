"""
Pipeline orchestration: student training, checkpoints, evaluation,
ablations and the command line
"""

from .ablation import ABLATION_ROWS, AblationRow, AblationTable, format_ablation, run_ablation, write_ablation
from .checkpoint import Checkpoint, load_checkpoint, network_for, save_checkpoint
from .cli import main
from .evaluation import evaluate, predict_frames
from .training import train_student

__all__ = [
    "ABLATION_ROWS",
    "AblationRow",
    "AblationTable",
    "format_ablation",
    "run_ablation",
    "write_ablation",
    "Checkpoint",
    "load_checkpoint",
    "network_for",
    "save_checkpoint",
    "main",
    "evaluate",
    "predict_frames",
    "train_student",
]

"""
ignet data - procedural LiDAR/camera scenes and weak-label simulation
"""

from .dataset import Dataset, generate_dataset, load_dataset, write_dataset
from .frame import SKY, Frame, point_features
from .frame_io import decode_frame, encode_frame, read_frame, write_frame
from .scene import build_scene, gen_scene
from .weak_labels import mark_labeled, sample_frames, scribble_sim

__version__ = "1.0.0"
__all__ = [
    "SKY",
    "Dataset",
    "Frame",
    "build_scene",
    "decode_frame",
    "encode_frame",
    "gen_scene",
    "generate_dataset",
    "load_dataset",
    "mark_labeled",
    "point_features",
    "read_frame",
    "sample_frames",
    "scribble_sim",
    "write_dataset",
    "write_frame",
]

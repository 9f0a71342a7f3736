"""Tap-refining MLP, its Levenberg-Marquardt trainer and training datasets."""

from .dataset import TapDataset, build_dataset, dnn_estimate, extract_ls_taps, split_sizes
from .mlp import ARCHITECTURES, MlpModel, forward, jacobian, pack_taps, unpack_taps
from .train import TrainConfig, TrainingDiverged, train

__all__ = [
    "ARCHITECTURES",
    "MlpModel",
    "TapDataset",
    "TrainConfig",
    "TrainingDiverged",
    "build_dataset",
    "dnn_estimate",
    "extract_ls_taps",
    "forward",
    "jacobian",
    "pack_taps",
    "split_sizes",
    "train",
    "unpack_taps",
]

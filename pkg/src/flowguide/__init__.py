"""Self-guided flow matching on toy 2D data."""

from .config import Config
from .datasets import Dataset, make_checkerboard, make_dataset, make_moons, make_ring
from .trainer import TrainState, run_training, train_offline, train_step

__all__ = [
    "Config",
    "Dataset",
    "TrainState",
    "make_checkerboard",
    "make_dataset",
    "make_moons",
    "make_ring",
    "run_training",
    "train_offline",
    "train_step",
]

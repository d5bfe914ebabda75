"""capsroute: capsule-network engine and experiment CLI for 3-class
brain tumor MRI classification, with a plain CNN baseline.

Everything is built on explicit forward/backward numpy ops (no autodiff
framework); the convolution/pooling hot loops optionally run through a
compiled extension (see capsroute.backend).
"""

from .backend import BACKEND
from .capsnet import (
    CapsNetConfig,
    CapsNetModel,
    default_tweak_deltas,
    margin_loss,
    route,
    squash,
    tweak,
)
from .checkpoint import Checkpoint
from .cnn import CnnConfig, CnnModel, cross_entropy
from .data import Dataset, Sample, downsample, load_dataset, make_synth_dataset, synth_generate
from .errors import CapsRouteError
from .presets import capsnet_preset, cnn_preset
from .rng import make_rng
from .train import TrainConfig, default_train_config, evaluate, model_from_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CapsNetConfig",
    "CapsNetModel",
    "CapsRouteError",
    "Checkpoint",
    "CnnConfig",
    "CnnModel",
    "Dataset",
    "Sample",
    "TrainConfig",
    "capsnet_preset",
    "cnn_preset",
    "cross_entropy",
    "default_train_config",
    "default_tweak_deltas",
    "downsample",
    "evaluate",
    "load_dataset",
    "make_rng",
    "make_synth_dataset",
    "margin_loss",
    "model_from_checkpoint",
    "route",
    "squash",
    "synth_generate",
    "train",
    "tweak",
    "__version__",
]

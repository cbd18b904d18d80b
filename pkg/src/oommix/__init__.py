"""Out-of-manifold mixup for text classification, built on a small numpy autodiff engine."""

from .corpus import DatasetSplit, SynthConfig, synthetic_split
from .encoder import Encoder, EncoderConfig
from .mixup import MixupModel, compute_losses
from .trainer import TrainConfig, TrainReport, train

__all__ = [
    "DatasetSplit",
    "Encoder",
    "EncoderConfig",
    "MixupModel",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "compute_losses",
    "synthetic_split",
    "train",
]

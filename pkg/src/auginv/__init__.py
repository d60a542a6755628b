"""Post-training augmentation invariance for frozen feature spaces.

Trains small MLP adapters on top of precomputed features with optimal
transport losses (anchored and correlation-based sliced Wasserstein
objectives) plus contrastive and kernel-dependence baselines, and evaluates
invariance, structure preservation, and label-collision rates.
"""

from .core import RngStream
from .errors import (
    AuginvError,
    CollapseError,
    CorruptFileError,
    DegenerateSampleError,
    InvalidConfigError,
    InvalidInputError,
    NumericalError,
    SizeLimitError,
)
from .losses import AugmentedBatch, LossConfig
from .ot import OtConfig, sliced_correlation, sliced_dependence, sliced_wasserstein
from .trainer import TrainConfig, train_adapter, train_probe

__version__ = "0.1.0"

__all__ = [
    "AugmentedBatch",
    "AuginvError",
    "CollapseError",
    "CorruptFileError",
    "DegenerateSampleError",
    "InvalidConfigError",
    "InvalidInputError",
    "LossConfig",
    "NumericalError",
    "OtConfig",
    "RngStream",
    "SizeLimitError",
    "TrainConfig",
    "sliced_correlation",
    "sliced_dependence",
    "sliced_wasserstein",
    "train_adapter",
    "train_probe",
    "__version__",
]

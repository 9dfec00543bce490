"""UCMNet: under-display-camera image restoration on a small numpy autodiff core."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .estimator import UCMNetRestorer
from .loss import LossConfig, total_loss
from .network import PRESETS, ModelConfig, UCMNet, count_parameters
from .tensor import GradientProgram, NumericError, ShapeError, Tensor
from .trainer import TrainConfig, Trainer, TrainingError, evaluate

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "GradientProgram",
    "LossConfig",
    "ModelConfig",
    "NumericError",
    "PRESETS",
    "RunConfig",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "Trainer",
    "TrainingError",
    "UCMNet",
    "UCMNetRestorer",
    "count_parameters",
    "evaluate",
    "load_checkpoint",
    "load_config",
    "save_checkpoint",
    "total_loss",
]

__version__ = "0.1.0"

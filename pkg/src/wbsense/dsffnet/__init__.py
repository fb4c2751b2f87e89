"""Dual-stream fusion network: layers, model, training, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import AdaptiveAvgPool, AvgPool, ConvBlock, Linear, conv_output_length
from .model import (
    Adam,
    DsffModel,
    MINIATURE_CONV_SPECS,
    ModelConfig,
    REFERENCE_CONV_SPECS,
    bce_grad,
    bce_loss,
    miniature_config,
    normalize_input,
)
from .training import (
    TrainResult,
    TrainSettings,
    subband_accuracy,
    train_model,
    write_history_csv,
)

__all__ = [
    "Adam",
    "AdaptiveAvgPool",
    "AvgPool",
    "ConvBlock",
    "DsffModel",
    "Linear",
    "MINIATURE_CONV_SPECS",
    "ModelConfig",
    "REFERENCE_CONV_SPECS",
    "TrainResult",
    "TrainSettings",
    "bce_grad",
    "bce_loss",
    "conv_output_length",
    "load_checkpoint",
    "miniature_config",
    "normalize_input",
    "save_checkpoint",
    "subband_accuracy",
    "train_model",
    "write_history_csv",
]

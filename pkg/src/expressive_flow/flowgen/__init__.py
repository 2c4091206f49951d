"""Conditional flow-matching generative model for action chunks."""

from .flow import (
    cond_to_raw,
    euler_integrate,
    fm_loss_and_grad,
    forward,
    grad_check,
    interpolate,
    sample,
    target_velocity,
)
from .policy import FlowMatchingPolicy, NotFittedError
from .training import Adam, TrainConfig, TrainingDiverged, train, write_loss_csv
from .types import ActionChunk, Condition, NormStats
from .unet import ModelConfig, ModelParams, velocity

__all__ = [
    "ActionChunk",
    "Adam",
    "Condition",
    "FlowMatchingPolicy",
    "ModelConfig",
    "ModelParams",
    "NormStats",
    "NotFittedError",
    "TrainConfig",
    "TrainingDiverged",
    "cond_to_raw",
    "euler_integrate",
    "fm_loss_and_grad",
    "forward",
    "grad_check",
    "interpolate",
    "sample",
    "target_velocity",
    "train",
    "velocity",
    "write_loss_csv",
]

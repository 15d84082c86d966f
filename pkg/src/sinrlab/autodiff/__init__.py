"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .optim import AdamState, EarlyStopper, LrSchedule, adam_step, early_stop_update, lr_at_epoch
from .tensor import Tape, Tensor, as_tensor, backward

__all__ = [
    "AdamState", "EarlyStopper", "LrSchedule", "Tape", "Tensor",
    "adam_step", "as_tensor", "backward", "early_stop_update", "lr_at_epoch", "ops",
]

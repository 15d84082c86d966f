"""Adam with L2 penalty, warm-up plus cosine warm-restart schedule, early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, l2: float = 0.0) -> dict[str, np.ndarray]:
    """One in-place Adam update; the L2 term is added to the gradient before the moments."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} for parameter {name} {p.shape}")
        if l2:
            g = g + l2 * p
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


@dataclass(frozen=True)
class LrSchedule:
    warmup_epochs: int = 40
    cycle_epochs: int = 100
    lr_min: float = 1e-4
    lr_max: float = 5e-3

    def __post_init__(self):
        if not 0 < self.lr_min < self.lr_max:
            raise ValueError("need 0 < lr_min < lr_max")
        if self.warmup_epochs <= 0 or self.cycle_epochs <= 0:
            raise ValueError("warm-up and cycle lengths must be positive")

    def cycle_index(self, epoch: int) -> int:
        """Annealing cycle an epoch belongs to; -1 during warm-up."""
        if epoch < self.warmup_epochs:
            return -1
        return (epoch - self.warmup_epochs) // self.cycle_epochs


def lr_at_epoch(epoch: int, s: LrSchedule) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < s.warmup_epochs:
        return s.lr_min + (s.lr_max - s.lr_min) * epoch / s.warmup_epochs
    tau = (epoch - s.warmup_epochs) % s.cycle_epochs
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + math.cos(math.pi * tau / s.cycle_epochs))


@dataclass
class EarlyStopper:
    patience_cycles: int = 4
    best_loss: float = math.inf
    cycles_since_improvement: int = 0


def early_stop_update(stopper: EarlyStopper, cycle_end_loss: float) -> bool:
    """Record one completed cycle; returns True when training should stop."""
    if cycle_end_loss < stopper.best_loss:
        stopper.best_loss = cycle_end_loss
        stopper.cycles_since_improvement = 0
    else:
        stopper.cycles_since_improvement += 1
    return stopper.cycles_since_improvement >= stopper.patience_cycles

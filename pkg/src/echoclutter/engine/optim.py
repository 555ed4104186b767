"""Adam optimizer and reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from ..errors import ContractError, ParameterError
from .tensor import ParamStore


class AdamState:
    """Per-parameter first/second moments and the shared step counter."""

    def __init__(self, params: ParamStore, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}


def adam_step(params: ParamStore, grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    missing = [name for name in params.names() if name not in grads]
    if missing:
        raise ContractError(f"missing gradients for parameters: {missing}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)


@dataclass
class LRSchedulerState:
    """Reduce-on-plateau bookkeeping (factor 0.1, patience 4, floor 1e-7)."""

    lr: float
    factor: float = 0.1
    patience: int = 4
    min_lr: float = 1e-7
    best: float | None = field(default=None)
    bad_epochs: int = 0


def lr_plateau_update(state: LRSchedulerState, validation_loss: float) -> float:
    """Track improvement; after `patience` flat epochs, scale lr down to the floor.

    The reduction multiplies in decimal so the protocol's decade values
    (1e-4 -> 1e-5 -> ... -> the 1e-7 floor) come out exactly, without
    binary-float drift.
    """
    if not math.isfinite(validation_loss):
        raise ParameterError(f"validation loss must be finite, got {validation_loss}")
    if state.best is None or validation_loss < state.best:
        state.best = validation_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            reduced = float(Decimal(repr(state.lr)) * Decimal(repr(state.factor)))
            state.lr = max(reduced, state.min_lr)
            state.bad_epochs = 0
    return state.lr

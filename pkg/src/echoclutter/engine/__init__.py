"""Minimal reverse-mode tensor engine with compiled hot kernels."""

from .backend import BACKEND_NAME, HAS_COMPILED
from .gradcheck import grad_check
from .optim import AdamState, LRSchedulerState, adam_step, lr_plateau_update
from .tensor import (BN_EPS, ParamStore, TensorND, activation, add, batchnorm3d,
                     clamped_log, concat_channels, conv3d, detach, dropout,
                     maxpool3d, mean_all, mse_loss, mul, no_grad, relu, sigmoid,
                     spatial_mean, upsample3d, weighted_sum)
from .weights import load_weights, save_weights

__all__ = [
    "BACKEND_NAME", "HAS_COMPILED", "BN_EPS",
    "ParamStore", "TensorND", "no_grad",
    "activation", "add", "batchnorm3d", "clamped_log", "concat_channels",
    "conv3d", "detach", "dropout", "maxpool3d", "mean_all", "mse_loss", "mul",
    "relu", "sigmoid", "spatial_mean", "upsample3d", "weighted_sum",
    "AdamState", "LRSchedulerState", "adam_step", "lr_plateau_update",
    "grad_check", "load_weights", "save_weights",
]

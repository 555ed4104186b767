"""Kernel backend selection: compiled extension with pure numpy fallback.

The compiled module is used when importable; set ECHOCLUTTER_BACKEND=numpy
to force the fallback or ECHOCLUTTER_BACKEND=compiled to require the
extension.  float64 inputs always take the numpy path (the extension is
float32-only); the finite-difference checks rely on this.
"""

from __future__ import annotations

import os

import numpy as np

from . import kernels_numpy

_requested = os.environ.get("ECHOCLUTTER_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "compiled", "numpy"):
    raise ValueError(f"ECHOCLUTTER_BACKEND must be auto|compiled|numpy, got {_requested!r}")

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None
    if _requested == "compiled" and _compiled is None:
        raise ImportError("ECHOCLUTTER_BACKEND=compiled but the compiled kernels "
                          "are not built; reinstall or use ECHOCLUTTER_BACKEND=numpy")

_active = _compiled if _compiled is not None else kernels_numpy
BACKEND_NAME = _active.BACKEND_NAME
HAS_COMPILED = _compiled is not None


def _use_compiled(*arrays) -> bool:
    return _active is not kernels_numpy and all(a.dtype == np.float32 for a in arrays)


def conv3d_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    if _use_compiled(x, w):
        return _active.conv3d_forward(x, w, bias)
    return kernels_numpy.conv3d_forward(x, w, bias)


def conv3d_grad_input(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    # gradient w.r.t. the input of a same-padded correlation is the same
    # correlation of dy with channel-transposed, spatially flipped weights
    wt = kernels_numpy.flip_transpose_weights(w)
    return conv3d_forward(dy, wt, None)


def conv3d_grad_weights(x: np.ndarray, dy: np.ndarray,
                        kshape: tuple[int, int, int]) -> np.ndarray:
    if _use_compiled(x, dy):
        return _active.conv3d_grad_weights(x, dy, kshape)
    return kernels_numpy.conv3d_grad_weights(x, dy, kshape)


maxpool3d_forward = kernels_numpy.maxpool3d_forward
maxpool3d_backward = kernels_numpy.maxpool3d_backward
upsample3d_forward = kernels_numpy.upsample3d_forward
upsample3d_backward = kernels_numpy.upsample3d_backward

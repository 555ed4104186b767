"""Pure numpy kernels: im2col convolution, pooling, upsampling.

These are the fallback implementations of the hot operations; the compiled
extension (`_kernels`) provides faster float32 versions of the convolution
routines.  All functions here are dtype-generic so the finite-difference
verification can run the same code paths in float64.

Activation layout is (N, C, H, W, F); convolution kernels are
(C_out, C_in, KH, KW, KF) with odd extents and "same" zero padding.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "numpy"


def _im2col(x: np.ndarray, kshape: tuple[int, int, int]) -> np.ndarray:
    """(N, C, H, W, F) -> (N*H*W*F, C*KH*KW*KF) patch matrix, zero padded."""
    kh, kw, kf = kshape
    pad = ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2), (kf // 2, kf // 2))
    xpad = np.pad(x, pad)
    win = sliding_window_view(xpad, kshape, axis=(2, 3, 4))  # (N,C,H,W,F,KH,KW,KF)
    n, c, h, w, f = x.shape
    return win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(n * h * w * f, c * kh * kw * kf)


def conv3d_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    n, c, h, wd, f = x.shape
    co = w.shape[0]
    dtype = np.result_type(x, w)
    cols = _im2col(x.astype(dtype, copy=False), w.shape[2:])
    out = cols @ w.reshape(co, -1).astype(dtype, copy=False).T
    out = np.ascontiguousarray(out.reshape(n, h, wd, f, co).transpose(0, 4, 1, 2, 3))
    if bias is not None:
        out += bias.astype(dtype, copy=False).reshape(1, -1, 1, 1, 1)
    return out


def conv3d_grad_weights(x: np.ndarray, dy: np.ndarray,
                        kshape: tuple[int, int, int]) -> np.ndarray:
    n, c, h, wd, f = x.shape
    co = dy.shape[1]
    dtype = np.result_type(x, dy)
    cols = _im2col(x.astype(dtype, copy=False), kshape)
    dymat = dy.astype(dtype, copy=False).transpose(0, 2, 3, 4, 1).reshape(-1, co)
    dw = dymat.T @ cols
    return dw.reshape(co, c, *kshape)


def flip_transpose_weights(w: np.ndarray) -> np.ndarray:
    """Channel-transposed, spatially flipped weights for the input gradient."""
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3, 4)[:, :, ::-1, ::-1, ::-1])


def maxpool3d_forward(x: np.ndarray):
    """(2, 2, 1) max pooling; returns output and per-window argmax codes.

    The argmax code j in 0..3 encodes (dh, dw) = (j // 2, j % 2); numpy's
    argmax takes the first maximum, which realizes the row-major tie break.
    """
    n, c, h, w, f = x.shape
    h2, w2 = h // 2, w // 2
    cand = (x.reshape(n, c, h2, 2, w2, 2, f)
             .transpose(0, 1, 2, 4, 6, 3, 5)
             .reshape(n, c, h2, w2, f, 4))
    idx = cand.argmax(axis=-1)
    out = np.take_along_axis(cand, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx.astype(np.uint8)


def maxpool3d_backward(dy: np.ndarray, idx: np.ndarray,
                       in_shape: tuple[int, ...]) -> np.ndarray:
    n, c, h, w, f = in_shape
    h2, w2 = h // 2, w // 2
    g = np.zeros((n, c, h2, w2, f, 4), dtype=dy.dtype)
    np.put_along_axis(g, idx[..., None].astype(np.int64), dy[..., None], axis=-1)
    g = g.reshape(n, c, h2, w2, f, 2, 2).transpose(0, 1, 2, 5, 3, 6, 4)
    return np.ascontiguousarray(g.reshape(n, c, h, w, f))


def upsample3d_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 repetition in H and W; frames untouched."""
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def upsample3d_backward(dy: np.ndarray) -> np.ndarray:
    n, c, h2, w2, f = dy.shape
    return np.ascontiguousarray(
        dy.reshape(n, c, h2 // 2, 2, w2 // 2, 2, f).sum(axis=(3, 5)))

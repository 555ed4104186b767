"""Reverse-mode differentiable tensors and the operator set the filter needs.

Activations are 5-D (batch, channels, height, width, frames).  Each operation
records a backward closure on its output; `TensorND.backward()` walks the tape
in reverse topological order.  Only the operators used by the filtering
networks are provided.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError, ParameterError
from . import backend

_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise ParameterError("tensor values must be finite")
    return arr


class TensorND:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[TensorND, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar output")
        order: list[TensorND] = []
        seen: set[int] = set()
        stack: list[tuple[TensorND, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, TensorND) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __repr__(self):
        return f"TensorND(shape={self.data.shape}, dtype={self.data.dtype}, " \
               f"requires_grad={self.requires_grad})"


def _wire(out_data: np.ndarray, parents: tuple[TensorND, ...], backward_fn) -> TensorND:
    if _grad_enabled and any(p.requires_grad for p in parents):
        t = TensorND(out_data, requires_grad=True)
        t._parents = parents
        t._backward_fn = backward_fn
        return t
    return TensorND(out_data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _coerce(x) -> TensorND:
    return x if isinstance(x, TensorND) else TensorND(np.asarray(x, dtype=np.float32))


def add(a, b) -> TensorND:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return _wire(out, (a, b), back)


def mul(a, b) -> TensorND:
    if not isinstance(b, TensorND) and np.isscalar(b):
        a = _coerce(a)
        s = float(b)

        def back_s(g):
            if a.requires_grad:
                a.accumulate_grad(g * s)

        return _wire(a.data * s, (a,), back_s)

    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def back(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return _wire(out, (a, b), back)


def detach(x: TensorND) -> TensorND:
    return TensorND(x.data)


def relu(x: TensorND) -> TensorND:
    pos = x.data > 0
    out = np.where(pos, x.data, 0.0).astype(x.data.dtype)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * pos)

    return _wire(out, (x,), back)


def sigmoid(x: TensorND) -> TensorND:
    s = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * s * (1.0 - s))

    return _wire(s.astype(x.data.dtype), (x,), back)


def activation(x: TensorND, kind: str) -> TensorND:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ParameterError(f"unknown activation kind {kind!r}")


def dropout(x: TensorND, rate: float, mode: str, rng: np.random.Generator | None = None) -> TensorND:
    """Inverted dropout: zero with probability `rate`, scale survivors."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be train or eval, got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("train-mode dropout needs a Generator")
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    out = x.data * keep

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * keep)

    return _wire(out, (x,), back)


def conv3d(x: TensorND, weight: TensorND, bias: TensorND, padding: str = "same") -> TensorND:
    """Cross-correlation with odd kernel extents and shape-preserving padding."""
    if padding != "same":
        raise ParameterError("only 'same' padding is supported")
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise DimensionError("conv3d expects 5-D input and weights")
    if weight.data.shape[1] != x.data.shape[1]:
        raise DimensionError(f"channel mismatch: input has {x.data.shape[1]}, "
                             f"kernel expects {weight.data.shape[1]}")
    kshape = weight.data.shape[2:]
    if any(k % 2 == 0 for k in kshape):
        raise ParameterError(f"kernel extents must be odd, got {kshape}")
    if bias.data.shape != (weight.data.shape[0],):
        raise DimensionError("bias length must equal the output channel count")

    out = backend.conv3d_forward(x.data, weight.data, bias.data)

    def back(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x.accumulate_grad(backend.conv3d_grad_input(g, weight.data))
        if weight.requires_grad:
            weight.accumulate_grad(backend.conv3d_grad_weights(x.data, g, kshape))
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3, 4)))

    return _wire(out, (x, weight, bias), back)


def maxpool3d(x: TensorND, window: tuple[int, int, int] = (2, 2, 1)) -> TensorND:
    if window != (2, 2, 1):
        raise ParameterError(f"only a (2, 2, 1) window is supported, got {window}")
    n, c, h, w, f = x.data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"H and W must be even for pooling, got ({h}, {w})")
    out, idx = backend.maxpool3d_forward(x.data)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(backend.maxpool3d_backward(g, idx, x.data.shape))

    return _wire(out, (x,), back)


def upsample3d(x: TensorND, factor: tuple[int, int, int] = (2, 2, 1)) -> TensorND:
    if factor != (2, 2, 1):
        raise ParameterError(f"only a (2, 2, 1) factor is supported, got {factor}")
    out = backend.upsample3d_forward(x.data)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(backend.upsample3d_backward(g))

    return _wire(out, (x,), back)


BN_EPS = 1e-5


def batchnorm3d(x: TensorND, gamma: TensorND, beta: TensorND,
                running_mean: np.ndarray, running_var: np.ndarray,
                mode: str, momentum: float = 0.9) -> TensorND:
    """Per-channel normalization over (batch, H, W, F).

    Train mode normalizes with batch statistics and updates the running
    arrays in place; eval mode uses the running statistics.
    """
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError("gamma/beta must be per-channel vectors")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be train or eval, got {mode!r}")
    axes = (0, 2, 3, 4)
    shape = (1, c, 1, 1, 1)

    if mode == "train":
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu.astype(running_mean.dtype)
        running_var *= momentum
        running_var += (1.0 - momentum) * var.astype(running_var.dtype)
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    ivar = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x.data - mu.reshape(shape)) * ivar.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)
    m = x.data.size // c

    def back(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if mode == "train":
                t1 = dxhat.sum(axis=axes, keepdims=True)
                t2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
                dx = (dxhat - t1 / m - xhat * t2 / m) * ivar.reshape(shape)
            else:
                dx = dxhat * ivar.reshape(shape)
            x.accumulate_grad(dx)

    return _wire(out.astype(x.data.dtype), (x, gamma, beta), back)


def concat_channels(tensors: list[TensorND]) -> TensorND:
    if not tensors:
        raise ContractError("concat_channels needs at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.data.shape[1] for t in tensors]

    def back(g):
        start = 0
        for t, c in zip(tensors, sizes):
            if t.requires_grad:
                t.accumulate_grad(g[:, start:start + c])
            start += c

    return _wire(out, tuple(tensors), back)


def mse_loss(pred: TensorND, target: TensorND) -> TensorND:
    """Mean over every element of the squared difference."""
    if pred.data.shape != target.data.shape:
        raise DimensionError(f"shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    n = diff.size
    val = np.asarray((diff.astype(np.float64) ** 2).mean(), dtype=pred.data.dtype)

    def back(g):
        scale = 2.0 * float(g) / n
        if pred.requires_grad:
            pred.accumulate_grad(scale * diff)
        if target.requires_grad:
            target.accumulate_grad(-scale * diff)

    return _wire(val, (pred, target), back)


def mean_all(x: TensorND) -> TensorND:
    n = x.data.size
    val = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g) / n))

    return _wire(val, (x,), back)


def spatial_mean(x: TensorND) -> TensorND:
    """Global average over (H, W, F), keeping (N, C, 1, 1, 1)."""
    axes = (2, 3, 4)
    n = int(np.prod([x.data.shape[a] for a in axes]))
    val = x.data.mean(axis=axes, keepdims=True)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g / n, x.data.shape))

    return _wire(val, (x,), back)


def clamped_log(x: TensorND, lo: float = 1e-7, hi: float = 1.0 - 1e-7) -> TensorND:
    """log of the input clamped into [lo, hi]; gradient is zero where clamped."""
    xc = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(g * inside / xc)

    return _wire(np.log(xc).astype(x.data.dtype), (x,), back)


def weighted_sum(x: TensorND, weights: np.ndarray) -> TensorND:
    """Scalar probe sum(x * weights) used by the gradient checker."""
    w = np.asarray(weights, dtype=x.data.dtype)
    if w.shape != x.data.shape:
        raise DimensionError("probe weights must match the tensor shape")
    val = np.asarray(np.vdot(x.data.astype(np.float64), w.astype(np.float64)),
                     dtype=x.data.dtype)

    def back(g):
        if x.requires_grad:
            x.accumulate_grad(float(g) * w)

    return _wire(val, (x,), back)


class ParamStore:
    """Named trainable tensors plus non-trainable buffers, in stable order."""

    def __init__(self):
        self._params: dict[str, TensorND] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, array: np.ndarray) -> TensorND:
        if name in self._params or name in self.buffers:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = TensorND(np.asarray(array, dtype=np.float32), requires_grad=True)
        self._params[name] = t
        return t

    def add_buffer(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self._params or name in self.buffers:
            raise ContractError(f"duplicate buffer name {name!r}")
        arr = np.asarray(array, dtype=np.float32).copy()
        self.buffers[name] = arr
        return arr

    def __getitem__(self, name: str) -> TensorND:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def gradients(self) -> dict[str, np.ndarray]:
        grads = {}
        for name, t in self._params.items():
            if t.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient")
            grads[name] = t.grad
        return grads

    def freeze(self) -> None:
        for t in self._params.values():
            t.requires_grad = False

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameter values followed by buffers, copied, in insertion order."""
        out = {name: t.data.copy() for name, t in self._params.items()}
        for name, arr in self.buffers.items():
            out[name] = arr.copy()
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name in list(self._params) + list(self.buffers):
            if name not in arrays:
                raise ContractError(f"missing entry {name!r} in state")
        for name, t in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float32)
            if arr.shape != t.data.shape:
                raise DimensionError(f"shape mismatch for {name!r}: "
                                     f"{arr.shape} vs {t.data.shape}")
            t.data = arr.copy()
        for name in self.buffers:
            arr = np.asarray(arrays[name], dtype=np.float32)
            if arr.shape != self.buffers[name].shape:
                raise DimensionError(f"shape mismatch for buffer {name!r}")
            self.buffers[name][...] = arr

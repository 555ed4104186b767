"""Finite-difference verification of reverse-mode gradients.

The check compares directional derivatives: a random output probe `u` and
input directions `v` give the scalar u . (J v).  Reverse mode computes it as
(J^T u) . v in float32 on the active backend; the central difference
evaluates the same scalar in float64 through the numpy kernels (float64
inputs always dispatch there).  The worst relative disagreement over a few
random probes is returned.
"""

from __future__ import annotations

import numpy as np

from .tensor import TensorND, no_grad, weighted_sum


def grad_check(fn, inputs, eps: float = 1e-3, trials: int = 4,
               rng: np.random.Generator | None = None) -> float:
    """Worst relative error between reverse-mode and central differences.

    `fn` maps a list of TensorND to one TensorND; `inputs` are arrays or
    tensors giving the evaluation point.  The point must be differentiable
    (nudge values away from relu kinks and pooling ties before calling).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    base = [np.asarray(t.data if isinstance(t, TensorND) else t, dtype=np.float32)
            for t in inputs]

    worst = 0.0
    for _ in range(max(1, trials)):
        ins = [TensorND(b.copy(), requires_grad=True) for b in base]
        out = fn(ins)
        u = rng.standard_normal(out.data.shape).astype(np.float32)
        vs = [rng.standard_normal(b.shape).astype(np.float32) for b in base]

        probe = weighted_sum(out, u)
        probe.backward()
        analytic = 0.0
        for t, v in zip(ins, vs):
            if t.grad is not None:
                analytic += float(np.vdot(t.grad.astype(np.float64), v.astype(np.float64)))

        def evaluate(sign: float) -> float:
            with no_grad():
                shifted = [TensorND(b.astype(np.float64) + sign * eps * v.astype(np.float64))
                           for b, v in zip(base, vs)]
                o = fn(shifted)
            return float(np.vdot(o.data.astype(np.float64), u.astype(np.float64)))

        numeric = (evaluate(+1.0) - evaluate(-1.0)) / (2.0 * eps)
        denom = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst

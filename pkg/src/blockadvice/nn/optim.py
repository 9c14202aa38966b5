"""Adam optimizer and global-norm gradient clipping."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Parameter

# Re-clipping an already clipped gradient set must be a bitwise no-op, so
# tolerate float32 rounding when deciding whether the norm exceeds the cap.
_CLIP_SLACK = 1e-6


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        g = p.grad.astype(np.float64).ravel()
        total += g @ g
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is ≤ max_norm.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(params)
    if norm > max_norm * (1.0 + _CLIP_SLACK):
        factor = max_norm / norm
        for p in params:
            p.grad *= p.grad.dtype.type(factor)
    return norm


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("Adam requires uniquely named parameters")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.data, dtype=np.float64) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data, dtype=np.float64) for p in self.params}
        # update math runs in preallocated float64 scratch so the hot loop
        # never allocates; `step` below is elementwise-identical to the
        # textbook m-hat/v-hat form written with temporaries
        self._g = {p.name: np.zeros_like(p.data, dtype=np.float64) for p in self.params}
        self._w = {p.name: np.zeros_like(p.data, dtype=np.float64) for p in self.params}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            g = self._g[p.name]
            w = self._w[p.name]
            m = self._m[p.name]
            v = self._v[p.name]
            np.copyto(g, p.grad)
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=w)
            m += w
            v *= self.beta2
            np.multiply(g, g, out=w)
            w *= 1.0 - self.beta2
            v += w
            np.divide(v, bc2, out=w)
            np.sqrt(w, out=w)
            w += self.eps
            np.multiply(m, self.lr / bc1, out=g)
            np.divide(g, w, out=g)  # the bias-corrected update
            np.copyto(w, p.data)
            np.subtract(w, g, out=w)
            p.data = w.astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

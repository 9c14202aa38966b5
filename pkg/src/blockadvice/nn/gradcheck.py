"""Finite-difference gradient checking.

Analytic gradients come from a float32 backward pass. The finite-difference
reference perturbs individual float32 parameter values but evaluates the
forward pass in float64 (ops are dtype-generic), which keeps the h**2
truncation error of the central difference above the round-off floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tensor, backward


@dataclass
class CoordCheck:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float

    @property
    def abs_err(self) -> float:
        return abs(self.analytic - self.numeric)

    def within(self, rtol: float, atol: float) -> bool:
        return self.abs_err <= atol + rtol * max(abs(self.analytic), abs(self.numeric))


@dataclass
class GradCheckReport:
    checks: list[CoordCheck] = field(default_factory=list)

    def fraction_within(self, rtol: float, atol: float) -> float:
        if not self.checks:
            return 1.0
        ok = sum(1 for c in self.checks if c.within(rtol, atol))
        return ok / len(self.checks)

    def all_within(self, rtol: float, atol: float) -> bool:
        return all(c.within(rtol, atol) for c in self.checks)

    def worst(self) -> CoordCheck | None:
        return max(self.checks, default=None, key=lambda c: c.abs_err)


def _sample_indices(shape: tuple[int, ...], max_coords: int, rng: np.random.Generator):
    size = int(np.prod(shape)) if shape else 1
    if size <= max_coords:
        flat = np.arange(size)
    else:
        flat = rng.choice(size, size=max_coords, replace=False)
    return [np.unravel_index(int(i), shape) if shape else () for i in flat]


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-3,
    max_coords_per_param: int = 20,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic vs central-difference gradients on sampled coordinates.

    loss_fn must rebuild the graph from current parameter data on every call
    and return a scalar loss.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    originals = {p.name: p.data for p in params}
    try:
        # evaluate both sides in float64: perturb a float64 copy of the data
        for p in params:
            p.data = originals[p.name].astype(np.float64)
        for p in params:
            for idx in _sample_indices(p.data.shape, max_coords_per_param, rng):
                base = p.data[idx]
                p.data[idx] = base + h
                up = float(loss_fn().item())
                p.data[idx] = base - h
                down = float(loss_fn().item())
                p.data[idx] = base
                numeric = (up - down) / (2.0 * h)
                report.checks.append(
                    CoordCheck(
                        param=p.name,
                        index=idx,
                        analytic=float(analytic[p.name][idx]),
                        numeric=numeric,
                    )
                )
    finally:
        for p in params:
            p.data = originals[p.name]
            p.zero_grad()
    return report

"""Helpers shared by every training loop: batch updates and loss logs."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .nn.optim import Adam, clip_grad_norm
from .nn.tensor import Parameter


class TrainingError(RuntimeError):
    """Training diverged or was misconfigured."""


def check_loss_finite(value: float, context: str) -> float:
    if not math.isfinite(value):
        raise TrainingError(f"{context}: loss diverged ({value})")
    return value


def apply_batch_update(
    opt: Adam,
    batch_size: int,
    clip_params: Sequence[Parameter],
    clip_norm: float,
) -> None:
    """Average accumulated per-example gradients, clip, step, reset."""
    inv = 1.0 / batch_size
    for p in opt.params:
        p.grad *= p.grad.dtype.type(inv)
    if clip_params:
        clip_grad_norm(clip_params, clip_norm)
    opt.step()
    opt.zero_grad()


def write_train_log(path: str | Path, entries: list[dict]) -> None:
    """JSON-lines loss log; deterministic bytes for a deterministic run."""
    lines = [json.dumps(e, sort_keys=True) for e in entries]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

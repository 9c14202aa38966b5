"""Reverse-mode autodiff over numpy arrays.

A forward pass builds a graph of `Tensor` nodes; `backward` walks it in
reverse topological order and accumulates gradients into leaf tensors
(typically `Parameter`s). Compute is float32 by default; reductions
accumulate in float64. Running a graph whose leaves hold float64 data
produces float64 everywhere, which the finite-difference checker uses.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

DEFAULT_DTYPE = np.float32


class NNError(Exception):
    """Base error for the neural computation core."""


class ShapeError(NNError):
    """Operands do not conform."""


class GraphError(NNError):
    """Illegal use of the differentiation graph."""


class NonFiniteError(NNError):
    """A NaN or Inf appeared where the contract requires finite values."""


_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle per-op NaN/Inf assertions (slow; meant for tests)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


def finite_checks_enabled() -> bool:
    return _FINITE_CHECKS


def guard_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")


class Tensor:
    """A node in the differentiation graph.

    `data` is a row-major numpy float array. Interior nodes carry a
    `backward_fn(out_grad, grads)` closure that routes gradients to their
    parents; leaves with `requires_grad` accumulate into `.grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward_fn: Optional[Callable] = None,
        dtype=None,
    ):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if _FINITE_CHECKS:
            guard_finite(arr, "tensor data")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def is_leaf(self) -> bool:
        return self.backward_fn is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """A named trainable leaf with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, name: str, data, trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def freeze(self) -> None:
        self.requires_grad = False

    def unfreeze(self) -> None:
        self.requires_grad = True

    def __repr__(self) -> str:
        tag = "" if self.requires_grad else ", frozen"
        return f"Parameter({self.name!r}, shape={self.shape}{tag})"


def constant(data, dtype=None) -> Tensor:
    """A non-differentiable graph input."""
    return Tensor(data, requires_grad=False, dtype=dtype)


def accumulate(node: Tensor, grad: np.ndarray, grads: dict) -> None:
    """Route `grad` to `node`: leaves get `.grad +=`, interior nodes pool in `grads`."""
    if not node.requires_grad:
        return
    if node.backward_fn is None:
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad += grad
        return
    key = id(node)
    if key in grads:
        grads[key] = grads[key] + grad
    else:
        grads[key] = grad


def _topo_order(root: Tensor) -> list:
    """Iterative post-order over the requires_grad subgraph."""
    order: list = []
    seen: set = set()
    stack: list = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable leaf from a scalar loss.

    Leaf gradients accumulate across calls; interior results are transient,
    so calling backward twice on the same graph adds the same gradient twice.
    """
    if loss.data.shape != ():
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        else:
            node.backward_fn(g, grads)

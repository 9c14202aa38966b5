"""Differentiable operations: layers, activations, losses.

Every op validates shapes, computes the forward value in the dtype of its
inputs, and records a closure that routes gradients to its parents. The
LSTM runs the whole sequence as one fused node so per-step Python overhead
stays off the training hot path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import (
    GraphError,
    NNError,
    ShapeError,
    Tensor,
    accumulate,
    finite_checks_enabled,
    guard_finite,
)

ACTIVATIONS = ("none", "relu", "leaky_relu")
LEAKY_SLOPE = 0.01


class IndexError_(NNError):
    """Out-of-range lookup (embedding id or class label)."""


class EmptySequenceError(NNError):
    """An operation that needs at least one timestep got none."""


def _result(data, parents, backward_fn) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=rg, parents=parents, backward_fn=backward_fn if rg else None)
    if finite_checks_enabled():
        guard_finite(out.data, "op output")
    return out


def _apply_activation(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "none":
        return pre
    if activation == "relu":
        return np.maximum(pre, 0)
    if activation == "leaky_relu":
        return np.where(pre > 0, pre, pre * pre.dtype.type(LEAKY_SLOPE))
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(pre: np.ndarray, activation: str) -> np.ndarray | None:
    if activation == "none":
        return None
    if activation == "relu":
        return (pre > 0).astype(pre.dtype)
    return np.where(pre > 0, pre.dtype.type(1), pre.dtype.type(LEAKY_SLOPE))


def fc_forward(x: Tensor, weight: Tensor, bias: Tensor, activation: str = "none") -> Tensor:
    """Fully connected layer: act(W @ x + b) for a vector x."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if weight.data.ndim != 2 or x.data.ndim != 1 or bias.data.ndim != 1:
        raise ShapeError(
            f"fc_forward expects W[m,n], x[n], b[m]; got {weight.shape}, {x.shape}, {bias.shape}"
        )
    m, n = weight.shape
    if x.shape != (n,) or bias.shape != (m,):
        raise ShapeError(
            f"fc_forward shape mismatch: W{weight.shape} x{x.shape} b{bias.shape}"
        )
    pre = weight.data @ x.data + bias.data
    out = _apply_activation(pre, activation)
    actg = _activation_grad(pre, activation)

    def backward_fn(g, grads):
        dpre = g if actg is None else g * actg
        if weight.requires_grad:
            accumulate(weight, np.outer(dpre, x.data), grads)
        if bias.requires_grad:
            accumulate(bias, dpre, grads)
        if x.requires_grad:
            accumulate(x, weight.data.T @ dpre, grads)

    return _result(out, (x, weight, bias), backward_fn)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of `table`; gradients scatter back into the looked-up rows."""
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    vocab = table.shape[0]
    ids = [int(i) for i in ids]
    for i in ids:
        if i < 0 or i >= vocab:
            raise IndexError_(f"embedding id {i} out of range [0, {vocab})")
    idx = np.asarray(ids, dtype=np.intp)
    out = table.data[idx] if ids else np.zeros((0, table.shape[1]), dtype=table.data.dtype)

    def backward_fn(g, grads):
        if table.requires_grad:
            dt = np.zeros_like(table.data)
            np.add.at(dt, idx, g)
            accumulate(table, dt, grads)

    return _result(out, (table,), backward_fn)


def _sigmoid_into(x: np.ndarray, out: np.ndarray, work: np.ndarray, mask: np.ndarray) -> None:
    """out = sigmoid(x) via the overflow-safe split 1/(1+e^-x) | e^x/(1+e^x).

    Branchless: exp(-|x|) is the numerator below zero and its reciprocal's
    denominator term above, so both branches share one exp. `work` and
    `mask` are caller-owned scratch of x's shape (float resp. bool).
    """
    np.greater_equal(x, 0.0, out=mask)
    np.abs(x, out=work)
    np.subtract(0.0, work, out=work)  # not negative(): NaN keeps its sign bit
    np.exp(work, out=work)
    np.add(1.0, work, out=out)
    np.copyto(work, 1.0, where=mask)
    np.divide(work, out, out=out)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    _sigmoid_into(x, out, np.empty_like(x), np.empty(x.shape, dtype=bool))
    return out


@dataclass
class LstmStates:
    """All hidden/cell states as arrays plus the differentiable last state."""

    hidden: np.ndarray  # [len, H]
    cell: np.ndarray  # [len, H]
    last: Tensor  # [H], on the tape


def lstm_forward(wx: Tensor, wh: Tensor, b: Tensor, inputs: Tensor) -> LstmStates:
    """Run an LSTM over `inputs` [len, d]; h_0 = c_0 = 0.

    Gate layout along the first axis of wx/wh/b is (input, forget,
    candidate, output), each of size H. Gradients flow through the last
    hidden state and reach wx, wh, b, and `inputs` by backprop through time.
    """
    if inputs.data.ndim != 2:
        raise ShapeError(f"lstm inputs must be [len, d], got {inputs.shape}")
    seq_len, d = inputs.shape
    if seq_len == 0:
        raise EmptySequenceError("lstm_forward needs at least one timestep")
    if wx.data.ndim != 2 or wx.shape[0] % 4 != 0:
        raise ShapeError(f"wx must be [4H, d], got {wx.shape}")
    hidden_size = wx.shape[0] // 4
    if wx.shape[1] != d:
        raise ShapeError(f"wx expects input dim {wx.shape[1]}, inputs have {d}")
    if wh.shape != (4 * hidden_size, hidden_size):
        raise ShapeError(f"wh must be [4H, H], got {wh.shape}")
    if b.shape != (4 * hidden_size,):
        raise ShapeError(f"b must be [4H], got {b.shape}")

    dtype = np.result_type(inputs.data.dtype, wx.data.dtype)
    x_all = inputs.data.astype(dtype, copy=False)
    xa = x_all @ wx.data.T.astype(dtype, copy=False)  # [len, 4H]
    hs = hidden_size

    # states live in [len+1, H] stores whose row 0 is the zero initial state,
    # so step t reads row t and writes row t+1 and backward reads the [:-1]
    # slice as the previous-step values without copying
    h_store = np.zeros((seq_len + 1, hs), dtype=dtype)
    c_store = np.zeros((seq_len + 1, hs), dtype=dtype)
    h_all = h_store[1:]
    c_all = c_store[1:]
    gates = np.empty((seq_len, 4 * hs), dtype=dtype)  # (i, f, g, o) per row
    tanh_c = np.empty((seq_len, hs), dtype=dtype)

    wh_d = wh.data.astype(dtype, copy=False)
    b_d = b.data.astype(dtype, copy=False)
    a = np.empty(4 * hs, dtype=dtype)
    sig_work = np.empty(2 * hs, dtype=dtype)
    sig_mask = np.empty(2 * hs, dtype=bool)
    prod = np.empty(hs, dtype=dtype)
    for t in range(seq_len):
        np.matmul(wh_d, h_store[t], out=a)
        np.add(xa[t], a, out=a)
        np.add(a, b_d, out=a)
        g_t = gates[t]
        _sigmoid_into(a[: 2 * hs], g_t[: 2 * hs], sig_work, sig_mask)
        np.tanh(a[2 * hs : 3 * hs], out=g_t[2 * hs : 3 * hs])
        _sigmoid_into(a[3 * hs :], g_t[3 * hs :], sig_work[:hs], sig_mask[:hs])
        np.multiply(g_t[hs : 2 * hs], c_store[t], out=prod)  # f * c
        np.multiply(g_t[:hs], g_t[2 * hs : 3 * hs], out=c_all[t])  # i * g
        np.add(prod, c_all[t], out=c_all[t])
        np.tanh(c_all[t], out=tanh_c[t])
        np.multiply(g_t[3 * hs :], tanh_c[t], out=h_all[t])  # h = o * tanh(c)

    def backward_fn(g_out, grads):
        dh = np.array(g_out, dtype=dtype)
        dc = np.zeros(hs, dtype=dtype)
        da_all = np.empty((seq_len, 4 * hs), dtype=dtype)
        u = np.empty(hs, dtype=dtype)
        w = np.empty(hs, dtype=dtype)
        one_minus = np.empty(4 * hs, dtype=dtype)
        for t in range(seq_len - 1, -1, -1):
            g_t = gates[t]
            i = g_t[:hs]
            f = g_t[hs : 2 * hs]
            gg = g_t[2 * hs : 3 * hs]
            o = g_t[3 * hs :]
            tc = tanh_c[t]
            da_t = da_all[t]
            # dc += dh * o * (1 - tanh(c)^2)
            np.multiply(tc, tc, out=u)
            np.subtract(1.0, u, out=u)
            np.multiply(dh, o, out=w)
            np.multiply(w, u, out=u)
            np.add(dc, u, out=dc)
            # (di, df, _, do) assembled in the gate layout, then two row-wide
            # passes apply the logistic derivative gate * (1 - gate); the
            # candidate lane is rewritten after with its tanh derivative
            np.subtract(1.0, g_t, out=one_minus)
            np.multiply(dc, gg, out=da_t[:hs])  # di
            np.multiply(dc, c_store[t], out=da_t[hs : 2 * hs])  # df
            da_t[2 * hs : 3 * hs] = 0.0  # keep the row passes warning-free
            np.multiply(dh, tc, out=da_t[3 * hs :])  # do
            np.multiply(da_t, g_t, out=da_t)
            np.multiply(da_t, one_minus, out=da_t)
            np.multiply(dc, i, out=u)  # dg
            np.multiply(gg, gg, out=w)
            np.subtract(1.0, w, out=w)
            np.multiply(u, w, out=da_t[2 * hs : 3 * hs])
            np.matmul(wh_d.T, da_t, out=dh)
            np.multiply(dc, f, out=dc)
        if wx.requires_grad:
            accumulate(wx, (da_all.T @ x_all).astype(wx.data.dtype, copy=False), grads)
        if wh.requires_grad:
            accumulate(wh, (da_all.T @ h_store[:-1]).astype(wh.data.dtype, copy=False), grads)
        if b.requires_grad:
            accumulate(b, da_all.sum(axis=0).astype(b.data.dtype, copy=False), grads)
        if inputs.requires_grad:
            accumulate(inputs, (da_all @ wx.data.astype(dtype, copy=False)), grads)

    last = _result(h_all[-1].copy(), (wx, wh, b, inputs), backward_fn)
    return LstmStates(hidden=h_all, cell=c_all, last=last)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward_fn(g, grads):
        accumulate(a, g, grads)
        accumulate(b, g, grads)

    return _result(out, (a, b), backward_fn)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise sum of one or more same-shape tensors."""
    if not tensors:
        raise ShapeError("add_n needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"add_n shape mismatch: {shape} vs {t.shape}")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out = out + t.data

    def backward_fn(g, grads):
        for t in tensors:
            accumulate(t, g, grads)

    return _result(out, tuple(tensors), backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(x.data.dtype)
    out = x.data * mask

    def backward_fn(g, grads):
        accumulate(x, g * mask, grads)

    return _result(out, (x,), backward_fn)


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    factor = np.where(x.data > 0, x.data.dtype.type(1), x.data.dtype.type(slope))
    out = x.data * factor

    def backward_fn(g, grads):
        accumulate(x, g * factor, grads)

    return _result(out, (x,), backward_fn)


def concat(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError(f"concat expects vectors, got {a.shape} and {b.shape}")
    out = np.concatenate([a.data, b.data])
    split = a.shape[0]

    def backward_fn(g, grads):
        accumulate(a, g[:split], grads)
        accumulate(b, g[split:], grads)

    return _result(out, (a, b), backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    f = x.data.dtype.type(factor)
    out = x.data * f

    def backward_fn(g, grads):
        accumulate(x, g * f, grads)

    return _result(out, (x,), backward_fn)


def vsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar node (64-bit accumulation)."""
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype).reshape(())

    def backward_fn(g, grads):
        accumulate(x, np.full_like(x.data, g), grads)

    return _result(out, (x,), backward_fn)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """−log softmax(logits)[label], max-subtracted for stability."""
    if logits.data.ndim != 1 or logits.shape[0] < 2:
        raise ShapeError(f"logits must be a vector of length ≥ 2, got {logits.shape}")
    k = logits.shape[0]
    label = int(label)
    if label < 0 or label >= k:
        raise IndexError_(f"label {label} out of range [0, {k})")
    z = logits.data.astype(np.float64)
    z = z - z.max()
    ez = np.exp(z)
    total = ez.sum()
    loss = np.log(total) - z[label]
    probs = (ez / total).astype(logits.data.dtype)
    out = np.asarray(loss, dtype=logits.data.dtype).reshape(())

    def backward_fn(g, grads):
        d = probs.copy()
        d[label] -= 1
        accumulate(logits, d * g, grads)

    return _result(out, (logits,), backward_fn)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain softmax on a value vector (no tape)."""
    z = logits.astype(np.float64)
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


def mse_loss(pred: Tensor, gold: Tensor | np.ndarray) -> Tensor:
    """Mean squared componentwise difference (64-bit accumulation)."""
    gold_t = gold if isinstance(gold, Tensor) else Tensor(gold, dtype=pred.data.dtype)
    if pred.shape != gold_t.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {gold_t.shape}")
    k = pred.data.size
    if k == 0:
        raise ShapeError("mse_loss on empty tensors")
    diff = pred.data - gold_t.data
    d64 = diff.astype(np.float64).ravel()
    out = np.asarray(d64 @ d64 / k, dtype=pred.data.dtype).reshape(())

    def backward_fn(g, grads):
        d = diff * (2.0 / k) * g
        accumulate(pred, d, grads)
        if gold_t.requires_grad:
            accumulate(gold_t, -d, grads)

    return _result(out, (pred, gold_t), backward_fn)


def zero_scalar(dtype=np.float32) -> Tensor:
    """A constant zero loss (no gradient flows anywhere)."""
    return Tensor(np.zeros((), dtype=dtype))


def check_scalar(t: Tensor) -> None:
    if t.data.shape != ():
        raise GraphError(f"expected scalar, got shape {t.data.shape}")

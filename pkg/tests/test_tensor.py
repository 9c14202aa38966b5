import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockadvice.nn import (
    GraphError,
    NonFiniteError,
    Parameter,
    Tensor,
    add,
    add_n,
    backward,
    mse_loss,
    relu,
    scale,
    set_finite_checks,
    vsum,
)


def leaf(values, name="p"):
    return Parameter(name, np.asarray(values, dtype=np.float32))


def test_backward_requires_scalar():
    p = leaf([1.0, 2.0])
    with pytest.raises(GraphError):
        backward(add(p, p))


def test_diamond_graph_accumulates_grads():
    p = leaf([2.0])
    left = add(p, p)
    right = add(p, p)
    loss = vsum(add(left, right))
    backward(loss)
    assert loss.item() == pytest.approx(8.0)
    np.testing.assert_allclose(p.grad, [4.0])


def test_leaf_grads_persist_across_backward_calls():
    p = leaf([1.0, -1.0])
    backward(vsum(relu(p)))
    backward(vsum(relu(p)))
    # relu grad is [1, 0]; two calls accumulate
    np.testing.assert_allclose(p.grad, [2.0, 0.0])


def test_frozen_parameter_gets_no_grad():
    p = leaf([1.0, 2.0])
    q = leaf([3.0, 4.0], name="q")
    p.freeze()
    backward(vsum(add(p, q)))
    assert p.grad is None or not p.requires_grad
    np.testing.assert_allclose(q.grad, [1.0, 1.0])


def test_scale_and_vsum_values():
    p = leaf([1.0, 2.0, 3.0])
    loss = vsum(scale(p, 2.0))
    backward(loss)
    assert loss.item() == pytest.approx(12.0)
    np.testing.assert_allclose(p.grad, [2.0, 2.0, 2.0])


@given(st.lists(st.floats(-10, 10, width=32), min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_add_n_matches_repeated_add(values):
    xs = [leaf([v], name=f"p{i}") for i, v in enumerate(values)]
    total = add_n(list(xs))
    expect = xs[0]
    for x in xs[1:]:
        expect = add(expect, x)
    np.testing.assert_allclose(total.numpy(), expect.numpy(), rtol=1e-6)


def test_mse_loss_two_sided_grads():
    a = leaf([1.0, 2.0])
    b = leaf([0.0, 4.0], name="b")
    loss = mse_loss(a, b)
    backward(loss)
    # d/da mean((a-b)^2) = 2(a-b)/n
    np.testing.assert_allclose(a.grad, [1.0, -2.0], rtol=1e-6)
    np.testing.assert_allclose(b.grad, [-1.0, 2.0], rtol=1e-6)


def test_finite_guard_catches_overflow():
    set_finite_checks(True)
    try:
        p = leaf([np.finfo(np.float32).max])
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
            loss = vsum(scale(p, 2.0))
            backward(loss)
    finally:
        set_finite_checks(False)


def test_float64_leaves_keep_float64_forward():
    p = Parameter("p", np.asarray([1.0, 2.0], dtype=np.float64))
    out = add(p, p)
    assert out.numpy().dtype == np.float64


def test_tensor_constant_has_no_grad_path():
    c = Tensor(np.asarray([1.0, 2.0], dtype=np.float32))
    p = leaf([3.0, 4.0])
    backward(vsum(add(c, p)))
    np.testing.assert_allclose(p.grad, [1.0, 1.0])
    assert not c.requires_grad

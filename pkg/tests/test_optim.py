"""Optimizer update rules, hand-evaluated anchors, and state round-trips."""

import numpy as np
import pytest

from terachan.autodiff import Tensor
from terachan.optim import Adam, Sgd, make_optimizer, zero_grads


def _param(value, grad):
    p = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    p.grad = None if grad is None else np.asarray(grad, dtype=np.float64)
    return p


def test_sgd_definitional_update():
    p = _param([1.0], [0.5])
    Sgd(1e-4).step({"p": p})
    assert p.data[0] == pytest.approx(0.99995, abs=1e-15)


def test_sgd_zero_gradient_is_fixed_point():
    p = _param([1.0, -2.0], [0.0, 0.0])
    Sgd(1e-4).step({"p": p})
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_bias_corrected():
    # t=1: m_hat = g, v_hat = g^2, update = lr * 1 / (1 + eps)
    p = _param([0.1], [1.0])
    Adam(1e-4).step({"p": p})
    expected = 0.1 - 1e-4 * (1.0 / (1.0 + 1e-8))
    assert p.data[0] == pytest.approx(expected, abs=1e-18)


def test_adam_zero_gradient_moves_at_most_eps_scale():
    p = _param([0.3], [0.0])
    Adam(1e-4).step({"p": p})
    assert abs(p.data[0] - 0.3) <= 1e-8


def test_adam_matches_reference_sequence(rng):
    # independent hand-rolled Adam recursion over several steps
    g_seq = rng.normal(size=(6, 3))
    p = _param(rng.normal(size=3), None)
    ref = p.data.copy()
    opt = Adam(1e-3)
    m = np.zeros(3)
    v = np.zeros(3)
    for t, g in enumerate(g_seq, start=1):
        p.grad = g.copy()
        opt.step({"p": p})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p.data, ref, atol=1e-15)


def test_step_counter_increases():
    p = _param([1.0], [0.1])
    opt = Adam(1e-4)
    for expected in (1, 2, 3):
        opt.step({"p": p})
        assert opt.step_count == expected


def test_none_gradient_skipped():
    p = _param([2.0], None)
    Adam(1e-4).step({"p": p})
    assert p.data[0] == 2.0


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError):
        Sgd(0.0)
    with pytest.raises(ValueError):
        Adam(-1e-4)


def test_mismatched_gradient_shape_rejected():
    from terachan.autodiff import ShapeError

    p = _param([1.0, 2.0], [0.1, 0.2, 0.3])
    with pytest.raises(ShapeError):
        Sgd(1e-4).step({"p": p})
    with pytest.raises(ShapeError):
        Adam(1e-4).step({"p": p})


def test_adam_state_roundtrip(rng):
    p = _param(rng.normal(size=4), rng.normal(size=4))
    opt = Adam(3e-4)
    opt.step({"p": p})
    clone = Adam(1.0)
    clone.load_state_dict(opt.state_dict())
    clone.load_moment_arrays(opt.moment_arrays())
    assert clone.learning_rate == 3e-4 and clone.step_count == 1
    np.testing.assert_array_equal(clone.m["p"], opt.m["p"])
    np.testing.assert_array_equal(clone.v["p"], opt.v["p"])

    # identical future trajectories
    p2 = _param(p.data.copy(), None)
    g = rng.normal(size=4)
    p.grad = g.copy()
    p2.grad = g.copy()
    opt.step({"p": p})
    clone.step({"p": p2})
    np.testing.assert_array_equal(p.data, p2.data)


def test_make_optimizer_and_zero_grads():
    assert isinstance(make_optimizer("sgd", 0.1), Sgd)
    assert isinstance(make_optimizer("adam", 0.1), Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 0.1)
    p = _param([1.0], [1.0])
    zero_grads({"p": p})
    assert p.grad is None

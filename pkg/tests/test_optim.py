"""Adam behavior and the step-decay schedule."""

import numpy as np
import pytest

from gfi import optim
from gfi.tensor import Tensor


def test_adam_minimizes_a_quadratic():
    rng = np.random.default_rng(0)
    target = rng.standard_normal(6)
    w = Tensor(np.zeros(6), requires_grad=True)
    opt = optim.Adam([("w", w)], lr=0.05)
    for _ in range(400):
        opt.zero_grad()
        ((w - Tensor(target)).square()).sum().backward()
        opt.step()
    assert np.abs(w.data - target).max() < 1e-3


def test_first_step_magnitude_is_about_lr():
    # with constant gradients the bias-corrected update is lr * sign(g)
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    w.grad = np.array([1e-4, 3e2])
    before = w.data.copy()
    opt = optim.Adam([("w", w)], lr=1e-2)
    opt.step()
    step = before - w.data
    assert np.allclose(np.abs(step), 1e-2, rtol=1e-3)
    assert np.sign(step[0]) == 1.0 and np.sign(step[1]) == 1.0


def test_params_without_grad_are_skipped():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    a.grad = np.full(3, 0.5)
    opt = optim.Adam([("a", a), ("b", b)], lr=0.1)
    opt.step()
    assert not np.array_equal(a.data, np.ones(3))
    assert np.array_equal(b.data, np.ones(3))
    assert np.array_equal(opt._v[1], np.zeros(3))


def test_non_finite_gradient_raises():
    w = Tensor(np.ones(2), requires_grad=True)
    w.grad = np.array([1.0, np.nan])
    opt = optim.Adam([("w", w)])
    with pytest.raises(FloatingPointError, match="w"):
        opt.step()


def test_lr_is_a_live_attribute():
    w = Tensor(np.zeros(1), requires_grad=True)
    opt = optim.Adam([("w", w)], lr=1.0)
    w.grad = np.ones(1)
    opt.step()
    first = abs(w.data[0])
    opt.lr = 0.25
    w.grad = np.ones(1)
    before = w.data[0]
    opt.step()
    second = abs(w.data[0] - before)
    assert first == pytest.approx(1.0, rel=1e-3)
    assert second < 0.5 * first


def test_step_decay_schedule():
    assert optim.lr_at(0, 2e-3, 0.5, 100) == 2e-3
    assert optim.lr_at(99, 2e-3, 0.5, 100) == 2e-3
    assert optim.lr_at(100, 2e-3, 0.5, 100) == 1e-3
    assert optim.lr_at(250, 2e-3, 0.5, 100) == 5e-4
    with pytest.raises(ValueError, match="interval"):
        optim.lr_at(0, 2e-3, 0.5, 0)

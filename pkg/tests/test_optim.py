import numpy as np
import pytest

from ifasnet.optim import Adam, lr_at
from ifasnet.tensor import Tensor


def test_lr_schedule():
    assert lr_at(0) == 1e-3 and lr_at(1) == 1e-3
    assert lr_at(4) == pytest.approx(1e-3 * 0.98 ** 2)
    assert lr_at(99) == pytest.approx(1e-3 * 0.98 ** 49)


def test_adam_matches_reference_update(rng):
    p = Tensor(rng.standard_normal(4), requires_grad=True)
    x = p.data.copy()
    m = v = np.zeros(4)
    opt = Adam([p], lr=0.01)
    for t in range(1, 6):
        g = rng.standard_normal(4)
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p.data, x, atol=1e-15)


def test_adam_skips_non_finite_step():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = Adam([p])
    p.grad = np.array([np.nan, 1.0])
    assert not opt.step()
    np.testing.assert_array_equal(p.data, [1.0, 1.0])
    assert opt.t == 0


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(500):
        p.grad = 2 * p.data
        opt.step()
    assert np.max(np.abs(p.data)) < 1e-2

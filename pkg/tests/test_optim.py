import numpy as np
import pytest

from dialectid import autodiff as ad
from dialectid.errors import NumericalFault
from dialectid.optim import AdamState, adam_step


def param(value):
    arr = np.asarray(value, dtype=np.float64)
    t = ad.Tensor(arr.copy(), True)
    t.grad = np.zeros_like(arr)
    return t


class TestAdam:
    def test_zero_grads_fixed_point(self):
        p = param([1.0, -2.0, 3.0])
        before = p.data.copy()
        adam_step([("p", p)], {"p": np.zeros(3)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_is_signed_lr(self):
        # bias-corrected first step: lr * g / (|g| + eps) ~ lr * sign(g)
        for g in (4.0, -0.3):
            p = param([0.0])
            adam_step([("p", p)], {"p": np.array([g])}, AdamState(), lr=0.01)
            assert abs(float(p.data[0]) + 0.01 * np.sign(g)) < 1e-6

    def test_decay_only_shrinks(self):
        p = param([2.0])
        state = AdamState()
        for _ in range(3):
            adam_step([("p", p)], {"p": np.zeros(1)}, state, lr=0.1, weight_decay=0.5)
        assert abs(float(p.data[0]) - 2.0 * (1 - 0.1 * 0.5) ** 3) < 1e-12

    def test_nan_grad_aborts(self):
        p = param([1.0])
        with pytest.raises(NumericalFault):
            adam_step([("p", p)], {"p": np.array([np.nan])}, AdamState(), lr=0.1)

    def test_converges_on_quadratic(self):
        p = param([5.0, -3.0])
        state = AdamState()
        for _ in range(800):
            adam_step([("p", p)], {"p": 2.0 * p.data}, state, lr=0.05)
        assert np.max(np.abs(p.data)) < 1e-3

    def test_missing_grad_skipped(self):
        p, q = param([1.0]), param([2.0])
        adam_step([("p", p), ("q", q)], {"p": np.array([1.0])}, AdamState(), lr=0.1)
        assert float(q.data[0]) == 2.0
        assert float(p.data[0]) != 1.0

"""Tour of the tape-based autodiff engine.

Build tensors, record a computation, pull gradients back, and verify one
against central differences.
"""
import numpy as np

from dialectid import autodiff as ad

# leaf tensors: shape + row-major data
x = ad.tensor_new([2, 3], [0.5, -1.0, 2.0, 1.5, 0.0, -0.5], requires_grad=True)
w = ad.tensor_new([3, 2], np.linspace(-1, 1, 6), requires_grad=True)

# record a forward pass on a tape
with ad.Tape():
    h = ad.tanh(ad.matmul(x, w))
    loss = ad.mean(ad.mul(h, h))
    grads = ad.backward(loss)

print("loss:", float(loss.data))
print("dloss/dx:\n", grads[x.node_id].data)
print("dloss/dw:\n", grads[w.node_id].data)

# the same gradient, checked against (f(x+eps) - f(x-eps)) / 2eps
err = ad.finite_diff_check(
    lambda v: ad.mean(ad.mul(ad.tanh(ad.matmul(v, w)), ad.tanh(ad.matmul(v, w)))),
    x, eps=1e-6)
print("max relative error vs central differences:", err)

# without an active tape, apply() is eager evaluation: nothing recorded
y = ad.relu(ad.constant(np.array([-1.0, 0.3, 2.0])))
print("eager relu:", y.data, "requires_grad:", y.requires_grad)

"""Adam with decoupled weight decay.

Decay multiplies parameters by (1 - lr*wd) before the bias-corrected
moment update. Non-finite gradients abort the run (the caller's last
written checkpoint stays on disk).
"""

import numpy as np

from .errors import NumericalFault


class AdamState:
    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, grads, state, lr, weight_decay=0.0,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One update over `params` (iterable of (name, Tensor)) with
    `grads` as {name: ndarray}; mutates parameters and state in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params:
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalFault(f"non-finite gradient for {name}")
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state

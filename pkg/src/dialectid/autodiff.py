"""Reverse-mode automatic differentiation on a flat tape of primitive ops.

Forward calls record (kind, input ids, attrs, output id) nodes onto the
innermost active Tape; backward walks the node list once in reverse and
accumulates vector-Jacobian products. Tensors are thin wrappers around
numpy arrays. Without an active tape, or when no input requires a
gradient, apply() evaluates eagerly and records nothing, which is the
fast path used for inference.

Tapes are per-thread: independent forward/backward passes may run on
separate threads, each inside its own `with Tape():` block.
"""

import threading
from itertools import count

import numpy as np

from .errors import InvalidAxis, InvalidShape, NotScalar

_ids = count(1)
_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


class Tensor:
    """n-d array with an optional gradient slot and a tape handle."""

    __slots__ = ("data", "requires_grad", "node_id", "grad", "tape")

    def __init__(self, data, requires_grad=False):
        self.data = data
        self.requires_grad = requires_grad
        self.node_id = None
        self.grad = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor_new(shape, data, requires_grad=False, dtype=np.float64):
    """Create a leaf tensor from row-major values.

    `data` may be a flat sequence of length prod(shape) or an array
    already in the requested shape. The grad slot of a differentiable
    leaf starts at zero.
    """
    shape = tuple(int(s) for s in shape)
    arr = np.asarray(data, dtype=dtype)
    n = 1
    for s in shape:
        if s <= 0:
            raise InvalidShape(f"non-positive dim in shape {shape}")
        n *= s
    if arr.shape != shape:
        if arr.size != n:
            raise InvalidShape(f"shape {shape} needs {n} values, got {arr.size}")
        arr = arr.reshape(shape)
    t = Tensor(arr, requires_grad)
    if requires_grad:
        t.grad = np.zeros(shape, dtype=dtype)
    return t


def constant(data, dtype=np.float64):
    """Wrap an array as a non-differentiable tensor (no copy if possible)."""
    return Tensor(np.asarray(data, dtype=dtype), False)


class Tape:
    """Topologically ordered record of primitive applications.

    Nodes are appended in execution order, so every node's inputs are
    produced (or registered as leaves) before the node itself; backward
    visits each node exactly once in reverse.
    """

    __slots__ = ("nodes", "values", "leaves")

    def __init__(self):
        self.nodes = []   # (kind, input_ids, attrs, need_mask, out_id)
        self.values = {}  # node id -> ndarray
        self.leaves = {}  # node id -> leaf Tensor (requires_grad only)

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False


def apply(kind, inputs, attrs=None):
    """Apply a primitive; record a node when recording is active.

    A node is recorded iff a Tape is active and at least one input
    requires a gradient. Input data is never mutated.
    """
    prim = PRIMITIVES.get(kind)
    if prim is None:
        raise ValueError(f"unknown primitive kind {kind!r}")
    arrays = [t.data for t in inputs]
    out_data = prim[0](arrays, attrs)

    stack = _tape_stack()
    if stack:
        rg = False
        for t in inputs:
            if t.requires_grad:
                rg = True
                break
        if rg:
            tape = stack[-1]
            values = tape.values
            ids = []
            need = []
            for t in inputs:
                i = t.node_id
                if i is None or i not in values:
                    if i is None:
                        i = t.node_id = next(_ids)
                    values[i] = t.data
                    if t.requires_grad:
                        tape.leaves[i] = t
                ids.append(i)
                need.append(t.requires_grad)
            out = Tensor(out_data, True)
            oid = out.node_id = next(_ids)
            values[oid] = out_data
            out.tape = tape
            tape.nodes.append((kind, tuple(ids), attrs, tuple(need), oid))
            return out
    return Tensor(out_data, False)


def backward(loss, seed=None):
    """Accumulate gradients of `loss` for every watched leaf of its tape.

    Returns {leaf node id -> gradient Tensor}; leaves the loss does not
    reach get zero gradients. `seed` overrides the default all-ones
    output gradient (used to chain an externally computed loss, e.g. a
    CTC gradient, into the recorded graph); without a seed the loss must
    be scalar.
    """
    tape = loss.tape
    if tape is None:
        raise ValueError("loss was not recorded on a tape")
    if seed is None:
        if loss.data.size != 1:
            raise NotScalar(f"loss has shape {loss.data.shape}, expected a scalar")
        seed = np.ones_like(loss.data)
    else:
        seed = np.asarray(seed, dtype=loss.data.dtype)
        if seed.shape != loss.data.shape:
            raise InvalidShape("seed gradient shape must match the loss shape")

    grads = {loss.node_id: seed}
    values = tape.values
    for kind, ids, attrs, need, oid in reversed(tape.nodes):
        g = grads.pop(oid, None)
        if g is None:
            continue
        gins = PRIMITIVES[kind][1](g, values[oid], [values[i] for i in ids], attrs, need)
        for i, gi in zip(ids, gins):
            if gi is None:
                continue
            cur = grads.get(i)
            grads[i] = gi if cur is None else cur + gi

    out = {}
    for lid, leaf in tape.leaves.items():
        g = grads.get(lid)
        if g is None:
            g = np.zeros_like(leaf.data)
        g = np.ascontiguousarray(g)
        leaf.grad = g
        out[lid] = Tensor(g, False)
    return out


def finite_diff_check(f, x, eps=1e-5, coords=None, analytic=None):
    """Max relative error between f's analytic gradient at x and central
    differences, |analytic - (f(x+eps e_i) - f(x-eps e_i))/2eps| / max(1, |analytic|).

    `coords` restricts the probe to a subset of flat indices (the full
    sweep is quadratic in model size). `analytic` supplies a precomputed
    gradient; by default it is obtained by recording f on a fresh tape.
    """
    if analytic is None:
        was = x.requires_grad
        x.requires_grad = True
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        with Tape():
            y = f(x)
            gmap = backward(y)
        x.requires_grad = was
        if x.node_id is not None and x.node_id in gmap:
            analytic = gmap[x.node_id].data
        else:
            analytic = np.zeros_like(x.data)
    ga = np.asarray(analytic).reshape(-1)
    flat = x.data.reshape(-1)
    idxs = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in idxs:
        orig = flat[i]
        flat[i] = orig + eps
        fp = _as_float(f(x))
        flat[i] = orig - eps
        fm = _as_float(f(x))
        flat[i] = orig
        fd = (fp - fm) / (2.0 * eps)
        err = abs(ga[i] - fd) / max(1.0, abs(ga[i]))
        if err > worst:
            worst = err
    return worst


def _as_float(v):
    if isinstance(v, Tensor):
        return float(v.data.reshape(()))
    return float(v)


# ---------------------------------------------------------------------------
# primitive forward / vector-Jacobian pairs
# ---------------------------------------------------------------------------

def _sigmoid(x):
    # (1 + tanh(x/2)) / 2 never overflows
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _binary_shapes(a, b, op):
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise InvalidShape(f"{op}: shapes {a.shape} and {b.shape} do not match")


def _reduce_to(g, ref):
    # collapse a gradient onto a scalar operand
    if ref.ndim == 0:
        return np.asarray(np.sum(g))
    return g


def _fwd_add(ins, attrs):
    a, b = ins
    _binary_shapes(a, b, "add")
    return a + b


def _vjp_add(g, out, ins, attrs, need):
    a, b = ins
    return (_reduce_to(g, a) if need[0] else None,
            _reduce_to(g, b) if need[1] else None)


def _fwd_mul(ins, attrs):
    a, b = ins
    _binary_shapes(a, b, "mul")
    return a * b


def _vjp_mul(g, out, ins, attrs, need):
    a, b = ins
    return (_reduce_to(g * b, a) if need[0] else None,
            _reduce_to(g * a, b) if need[1] else None)


def _fwd_matmul(ins, attrs):
    a, b = ins
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise InvalidShape(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def _vjp_matmul(g, out, ins, attrs, need):
    a, b = ins
    return (g @ b.T if need[0] else None,
            a.T @ g if need[1] else None)


def _fwd_relu(ins, attrs):
    return np.maximum(ins[0], 0.0)


def _vjp_relu(g, out, ins, attrs, need):
    return (g * (ins[0] > 0),)


def _fwd_sigmoid(ins, attrs):
    return _sigmoid(ins[0])


def _vjp_sigmoid(g, out, ins, attrs, need):
    return (g * out * (1.0 - out),)


def _fwd_tanh(ins, attrs):
    return np.tanh(ins[0])


def _vjp_tanh(g, out, ins, attrs, need):
    return (g * (1.0 - out * out),)


def _check_axis(x, axis, allow_none=False):
    if axis is None:
        if allow_none:
            return
        raise InvalidAxis("axis is required")
    if not isinstance(axis, int) or not -x.ndim <= axis < x.ndim:
        raise InvalidAxis(f"axis {axis} out of range for ndim {x.ndim}")


def _fwd_log_softmax(ins, attrs):
    x = ins[0]
    axis = attrs["axis"]
    _check_axis(x, axis)
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def _vjp_log_softmax(g, out, ins, attrs, need):
    axis = attrs["axis"]
    return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)


def _fwd_mean(ins, attrs):
    x = ins[0]
    axis = attrs["axis"]
    _check_axis(x, axis, allow_none=True)
    if x.size == 0:
        raise InvalidShape("mean of an empty tensor")
    return np.mean(x, axis=axis)


def _vjp_mean(g, out, ins, attrs, need):
    x = ins[0]
    axis = attrs["axis"]
    if axis is None:
        return (np.broadcast_to(g / x.size, x.shape),)
    n = x.shape[axis]
    return (np.broadcast_to(np.expand_dims(g / n, axis), x.shape),)


def _fwd_sum(ins, attrs):
    x = ins[0]
    axis = attrs["axis"]
    _check_axis(x, axis, allow_none=True)
    return np.sum(x, axis=axis)


def _vjp_sum(g, out, ins, attrs, need):
    x = ins[0]
    axis = attrs["axis"]
    if axis is None:
        return (np.broadcast_to(g, x.shape),)
    return (np.broadcast_to(np.expand_dims(g, axis), x.shape),)


def _fwd_concat(ins, attrs):
    axis = attrs["axis"]
    _check_axis(ins[0], axis)
    base = list(ins[0].shape)
    for x in ins[1:]:
        if x.ndim != len(base):
            raise InvalidShape("concat: rank mismatch")
        for d in range(len(base)):
            if d != axis % len(base) and x.shape[d] != base[d]:
                raise InvalidShape("concat: off-axis size mismatch")
    return np.concatenate(ins, axis=axis)


def _vjp_concat(g, out, ins, attrs, need):
    axis = attrs["axis"]
    offs = np.cumsum([x.shape[axis] for x in ins])[:-1]
    return tuple(np.split(g, offs, axis=axis))


def _fwd_slice(ins, attrs):
    x = ins[0]
    ranges = attrs["ranges"]
    if len(ranges) != x.ndim:
        raise InvalidShape(f"slice: {len(ranges)} ranges for ndim {x.ndim}")
    sl = []
    for d, (start, stop) in enumerate(ranges):
        if not 0 <= start < stop <= x.shape[d]:
            raise InvalidShape(f"slice: range ({start},{stop}) invalid on axis {d} "
                               f"of size {x.shape[d]}")
        sl.append(slice(start, stop))
    return x[tuple(sl)]


def _vjp_slice(g, out, ins, attrs, need):
    x = ins[0]
    z = np.zeros_like(x)
    z[tuple(slice(s, e) for s, e in attrs["ranges"])] = g
    return (z,)


def _fwd_reshape(ins, attrs):
    x = ins[0]
    shape = attrs["shape"]
    n = 1
    for s in shape:
        n *= s
    if n != x.size:
        raise InvalidShape(f"reshape: {x.shape} -> {shape}")
    return x.reshape(shape)


def _vjp_reshape(g, out, ins, attrs, need):
    return (g.reshape(ins[0].shape),)


def _fwd_transpose(ins, attrs):
    x = ins[0]
    axes = attrs["axes"]
    if sorted(axes) != list(range(x.ndim)):
        raise InvalidAxis(f"transpose: axes {axes} invalid for ndim {x.ndim}")
    return np.transpose(x, axes)


def _vjp_transpose(g, out, ins, attrs, need):
    axes = attrs["axes"]
    inv = np.argsort(axes)
    return (np.transpose(g, inv),)


def _fwd_conv2d(ins, attrs):
    x, w = ins
    if x.ndim != 4 or w.ndim != 4:
        raise InvalidShape("conv2d expects NCHW input and OIKK weight")
    sh, sw = attrs["stride"]
    ph, pw = attrs["pad"]
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    if ic != c:
        raise InvalidShape(f"conv2d: {c} input channels vs weight expecting {ic}")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise InvalidShape("conv2d: kernel larger than padded input")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    acc = np.zeros((oc, n, ho, wo), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            xs = xp[:, :, ky:ky + sh * ho:sh, kx:kx + sw * wo:sw]
            acc += np.tensordot(w[:, :, ky, kx], xs, axes=([1], [1]))
    return np.ascontiguousarray(np.moveaxis(acc, 0, 1))


def _vjp_conv2d(g, out, ins, attrs, need):
    x, w = ins
    sh, sw = attrs["stride"]
    ph, pw = attrs["pad"]
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    ho, wo = g.shape[2], g.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    dx = dw = None
    if need[1]:
        dw = np.empty_like(w)
        for ky in range(kh):
            for kx in range(kw):
                xs = xp[:, :, ky:ky + sh * ho:sh, kx:kx + sw * wo:sw]
                dw[:, :, ky, kx] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
    if need[0]:
        dxp = np.zeros_like(xp)
        for ky in range(kh):
            for kx in range(kw):
                t = np.tensordot(w[:, :, ky, kx], g, axes=([0], [1]))  # c,n,ho,wo
                dxp[:, :, ky:ky + sh * ho:sh, kx:kx + sw * wo:sw] += np.moveaxis(t, 0, 1)
        dx = dxp[:, :, ph:ph + h, pw:pw + wd] if (ph or pw) else dxp
    return (dx, dw)


def _pool_windows(x, kh, kw, sh, sw, ph, pw):
    n, c, h, wd = x.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise InvalidShape("maxpool2d: kernel larger than padded input")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=-np.inf) \
        if (ph or pw) else x
    wins = np.empty((kh * kw, n, c, ho, wo), dtype=x.dtype)
    k = 0
    for ky in range(kh):
        for kx in range(kw):
            wins[k] = xp[:, :, ky:ky + sh * ho:sh, kx:kx + sw * wo:sw]
            k += 1
    return xp, wins, ho, wo


def _fwd_maxpool2d(ins, attrs):
    x = ins[0]
    if x.ndim != 4:
        raise InvalidShape("maxpool2d expects NCHW input")
    kh, kw = attrs["kernel"]
    sh, sw = attrs["stride"]
    ph, pw = attrs["pad"]
    _, wins, _, _ = _pool_windows(x, kh, kw, sh, sw, ph, pw)
    return wins.max(axis=0)


def _vjp_maxpool2d(g, out, ins, attrs, need):
    x = ins[0]
    kh, kw = attrs["kernel"]
    sh, sw = attrs["stride"]
    ph, pw = attrs["pad"]
    xp, wins, ho, wo = _pool_windows(x, kh, kw, sh, sw, ph, pw)
    # first max in window order == lowest flat input index (ky-major scan)
    am = wins.argmax(axis=0)
    dxp = np.zeros_like(xp)
    k = 0
    for ky in range(kh):
        for kx in range(kw):
            sel = g * (am == k)
            dxp[:, :, ky:ky + sh * ho:sh, kx:kx + sw * wo:sw] += sel
            k += 1
    n, c, h, wd = x.shape
    dx = dxp[:, :, ph:ph + h, pw:pw + wd] if (ph or pw) else dxp
    return (dx,)


def _channel_view(v, x, axis):
    shape = [1] * x.ndim
    shape[axis] = v.shape[0]
    return v.reshape(shape)


def _fwd_affine_channel(ins, attrs):
    x, scale, shift = ins
    axis = attrs.get("axis", 1) if attrs else 1
    _check_axis(x, axis)
    if scale.shape != (x.shape[axis],) or shift.shape != (x.shape[axis],):
        raise InvalidShape("affine_channel: scale/shift must be 1-d of the axis size")
    return x * _channel_view(scale, x, axis) + _channel_view(shift, x, axis)


def _vjp_affine_channel(g, out, ins, attrs, need):
    x, scale, shift = ins
    axis = attrs.get("axis", 1) if attrs else 1
    red = tuple(d for d in range(x.ndim) if d != axis)
    dx = g * _channel_view(scale, x, axis) if need[0] else None
    dscale = np.sum(g * x, axis=red) if need[1] else None
    dshift = np.sum(g, axis=red) if need[2] else None
    return (dx, dscale, dshift)


def _norm_axes(x):
    return tuple(d for d in range(x.ndim) if d != 1)


def _fwd_channel_norm(ins, attrs):
    x = ins[0]
    if x.ndim < 2:
        raise InvalidShape("channel_norm expects a channel axis at dim 1")
    eps = attrs["eps"]
    red = _norm_axes(x)
    mean = x.mean(axis=red, keepdims=True)
    var = x.var(axis=red, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def _vjp_channel_norm(g, out, ins, attrs, need):
    x = ins[0]
    eps = attrs["eps"]
    red = _norm_axes(x)
    var = x.var(axis=red, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    g_mean = g.mean(axis=red, keepdims=True)
    gx_mean = (g * out).mean(axis=red, keepdims=True)
    return (inv * (g - g_mean - out * gx_mean),)


def _fwd_dropout(ins, attrs):
    x = ins[0]
    mask = attrs["mask"]
    rate = attrs["rate"]
    if mask.shape != x.shape:
        raise InvalidShape("dropout: mask shape must match input")
    return x * (mask / (1.0 - rate))


def _vjp_dropout(g, out, ins, attrs, need):
    return (g * (attrs["mask"] / (1.0 - attrs["rate"])),)


def _lstm_gates(pre, hid):
    i = _sigmoid(pre[:, :hid])
    f = _sigmoid(pre[:, hid:2 * hid])
    cand = np.tanh(pre[:, 2 * hid:3 * hid])
    o = _sigmoid(pre[:, 3 * hid:])
    return i, f, cand, o


def _fwd_lstm_cell(ins, attrs):
    pre, c = ins
    if pre.ndim != 2 or c.ndim != 2 or pre.shape[0] != c.shape[0] \
            or pre.shape[1] != 4 * c.shape[1]:
        raise InvalidShape(f"lstm_cell: pre {pre.shape} vs state {c.shape}")
    hid = c.shape[1]
    i, f, cand, o = _lstm_gates(pre, hid)
    c2 = f * c + i * cand
    h = o * np.tanh(c2)
    return np.concatenate([h, c2], axis=1)


def _vjp_lstm_cell(g, out, ins, attrs, need):
    pre, c = ins
    hid = c.shape[1]
    i, f, cand, o = _lstm_gates(pre, hid)
    c2 = out[:, hid:]
    tc = np.tanh(c2)
    gh, gc_out = g[:, :hid], g[:, hid:]
    dc2 = gc_out + gh * o * (1.0 - tc * tc)
    do = gh * tc
    dpre = np.empty_like(pre)
    dpre[:, :hid] = dc2 * cand * i * (1.0 - i)
    dpre[:, hid:2 * hid] = dc2 * c * f * (1.0 - f)
    dpre[:, 2 * hid:3 * hid] = dc2 * i * (1.0 - cand * cand)
    dpre[:, 3 * hid:] = do * o * (1.0 - o)
    dc = dc2 * f
    return (dpre if need[0] else None, dc if need[1] else None)


def _gru_gates(gx, gh, hid):
    r = _sigmoid(gx[:, :hid] + gh[:, :hid])
    z = _sigmoid(gx[:, hid:2 * hid] + gh[:, hid:2 * hid])
    n = np.tanh(gx[:, 2 * hid:] + r * gh[:, 2 * hid:])
    return r, z, n


def _fwd_gru_cell(ins, attrs):
    gx, gh, h = ins
    if gx.shape != gh.shape or gx.ndim != 2 or h.ndim != 2 \
            or gx.shape[0] != h.shape[0] or gx.shape[1] != 3 * h.shape[1]:
        raise InvalidShape(f"gru_cell: {gx.shape}/{gh.shape} vs state {h.shape}")
    hid = h.shape[1]
    r, z, n = _gru_gates(gx, gh, hid)
    return (1.0 - z) * n + z * h


def _vjp_gru_cell(g, out, ins, attrs, need):
    gx, gh, h = ins
    hid = h.shape[1]
    r, z, n = _gru_gates(gx, gh, hid)
    dn = g * (1.0 - z)
    dpre_n = dn * (1.0 - n * n)
    dz = g * (h - n)
    dpre_z = dz * z * (1.0 - z)
    dr = dpre_n * gh[:, 2 * hid:]
    dpre_r = dr * r * (1.0 - r)
    dgx = np.concatenate([dpre_r, dpre_z, dpre_n], axis=1)
    dgh = np.concatenate([dpre_r, dpre_z, dpre_n * r], axis=1)
    dh = g * z
    return (dgx if need[0] else None,
            dgh if need[1] else None,
            dh if need[2] else None)


PRIMITIVES = {
    "add": (_fwd_add, _vjp_add),
    "mul": (_fwd_mul, _vjp_mul),
    "matmul": (_fwd_matmul, _vjp_matmul),
    "conv2d": (_fwd_conv2d, _vjp_conv2d),
    "maxpool2d": (_fwd_maxpool2d, _vjp_maxpool2d),
    "relu": (_fwd_relu, _vjp_relu),
    "sigmoid": (_fwd_sigmoid, _vjp_sigmoid),
    "tanh": (_fwd_tanh, _vjp_tanh),
    "log_softmax": (_fwd_log_softmax, _vjp_log_softmax),
    "mean": (_fwd_mean, _vjp_mean),
    "sum": (_fwd_sum, _vjp_sum),
    "concat": (_fwd_concat, _vjp_concat),
    "slice": (_fwd_slice, _vjp_slice),
    "reshape": (_fwd_reshape, _vjp_reshape),
    "transpose": (_fwd_transpose, _vjp_transpose),
    "affine_channel": (_fwd_affine_channel, _vjp_affine_channel),
    "channel_norm": (_fwd_channel_norm, _vjp_channel_norm),
    "dropout": (_fwd_dropout, _vjp_dropout),
    "lstm_cell": (_fwd_lstm_cell, _vjp_lstm_cell),
    "gru_cell": (_fwd_gru_cell, _vjp_gru_cell),
}


# ---------------------------------------------------------------------------
# thin op wrappers
# ---------------------------------------------------------------------------

def add(a, b):
    return apply("add", (a, b))


def mul(a, b):
    return apply("mul", (a, b))


def matmul(a, b):
    return apply("matmul", (a, b))


def conv2d(x, w, stride=(1, 1), pad=(0, 0)):
    return apply("conv2d", (x, w), {"stride": stride, "pad": pad})


def maxpool2d(x, kernel, stride, pad=(0, 0)):
    return apply("maxpool2d", (x,), {"kernel": kernel, "stride": stride, "pad": pad})


def relu(x):
    return apply("relu", (x,))


def sigmoid(x):
    return apply("sigmoid", (x,))


def tanh(x):
    return apply("tanh", (x,))


def log_softmax(x, axis):
    return apply("log_softmax", (x,), {"axis": axis})


def mean(x, axis=None):
    return apply("mean", (x,), {"axis": axis})


def sum_(x, axis=None):
    return apply("sum", (x,), {"axis": axis})


def concat(xs, axis):
    return apply("concat", tuple(xs), {"axis": axis})


def slice_(x, ranges):
    return apply("slice", (x,), {"ranges": tuple(ranges)})


def reshape(x, shape):
    return apply("reshape", (x,), {"shape": tuple(shape)})


def transpose(x, axes):
    return apply("transpose", (x,), {"axes": tuple(axes)})


def affine_channel(x, scale, shift, axis=1):
    return apply("affine_channel", (x, scale, shift), {"axis": axis})


def channel_norm(x, eps=1e-5):
    return apply("channel_norm", (x,), {"eps": eps})


def dropout(x, mask, rate):
    return apply("dropout", (x,), {"mask": mask, "rate": rate})


def lstm_cell(pre, c):
    return apply("lstm_cell", (pre, c))


def gru_cell(gx, gh, h):
    return apply("gru_cell", (gx, gh, h))

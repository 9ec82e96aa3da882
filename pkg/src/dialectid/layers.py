"""Composite layers on top of the autodiff primitives.

The convolutional trunk is a trimmed 14-layer residual network: a 7x7
stride-2 stem, a 3x3 stride-2 maxpool, then four stages of basic blocks
([2, 2, 1, 1] blocks, channels [64, 128, 256, 512] at full scale). Each
stage entry strides the frequency axis by 2 and keeps the time axis, so
an input of T frames x 40 mel bins leaves the trunk as ceil(T/4) frames
of c4-dim vectors (frequency collapsed 40 -> 20 -> 10 -> 5 -> 3 -> 2 -> 1).

Normalization is a per-channel affine over statistics that are treated
as constants by the graph: the current input's statistics in training
mode, running averages in eval mode. `use_bn=False` removes it (convs
then carry biases).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InputTooShort, InvalidShape

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ParamStore:
    """Ordered name -> Tensor map; insertion order is deterministic."""

    def __init__(self):
        self._params = {}

    def add(self, name, tensor):
        if name in self._params:
            raise InvalidShape(f"duplicate parameter name {name!r}")
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix=None):
        if prefix is None:
            return list(self._params)
        return [n for n in self._params if n.startswith(prefix)]

    def trainable(self, prefix=None):
        return [(n, t) for n, t in self._params.items()
                if t.requires_grad and (prefix is None or n.startswith(prefix))]

    def param_count(self, prefix=None, trainable_only=False):
        total = 0
        for n, t in self._params.items():
            if prefix is not None and not n.startswith(prefix):
                continue
            if trainable_only and not t.requires_grad:
                continue
            total += t.data.size
        return total

    def state_bytes(self, prefix=None):
        """Canonical byte string of (name, shape, values); used for the
        freeze-contract hash and checkpoint serialization."""
        chunks = []
        for n, t in self._params.items():
            if prefix is not None and not n.startswith(prefix):
                continue
            chunks.append(n.encode())
            chunks.append(np.asarray(t.data.shape, dtype="<i8").tobytes())
            chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return b"".join(chunks)


def he_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(build, seed):
    """Fill a fresh ParamStore via `build(store, rng)`; deterministic in seed."""
    store = ParamStore()
    build(store, np.random.default_rng(seed))
    return store


def _leaf(store, name, data, trainable=True):
    t = ad.Tensor(np.asarray(data, dtype=np.float64), trainable)
    if trainable:
        t.grad = np.zeros_like(t.data)
    return store.add(name, t)


# ---------------------------------------------------------------------------
# parameter registration
# ---------------------------------------------------------------------------

def add_conv(store, name, rng, out_ch, in_ch, kh, kw, bias):
    fan_in = in_ch * kh * kw
    _leaf(store, f"{name}.w", he_uniform(rng, (out_ch, in_ch, kh, kw), fan_in))
    if bias:
        _leaf(store, f"{name}.b", np.zeros(out_ch))


def add_bn(store, name, ch):
    _leaf(store, f"{name}.gamma", np.ones(ch))
    _leaf(store, f"{name}.beta", np.zeros(ch))
    _leaf(store, f"{name}.rmean", np.zeros(ch), trainable=False)
    _leaf(store, f"{name}.rvar", np.ones(ch), trainable=False)


def add_linear(store, name, rng, in_dim, out_dim, bias=True):
    _leaf(store, f"{name}.w", he_uniform(rng, (in_dim, out_dim), in_dim))
    if bias:
        _leaf(store, f"{name}.b", np.zeros(out_dim))


def add_lstm(store, name, rng, in_dim, hidden):
    # gate order i, f, g, o; forget bias starts at 1
    _leaf(store, f"{name}.wx", he_uniform(rng, (in_dim, 4 * hidden), in_dim))
    _leaf(store, f"{name}.wh", he_uniform(rng, (hidden, 4 * hidden), hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    _leaf(store, f"{name}.b", b)


def add_gru(store, name, rng, in_dim, hidden):
    # gate order r, z, n
    _leaf(store, f"{name}.wx", he_uniform(rng, (in_dim, 3 * hidden), in_dim))
    _leaf(store, f"{name}.wh", he_uniform(rng, (hidden, 3 * hidden), hidden))
    _leaf(store, f"{name}.bx", np.zeros(3 * hidden))
    _leaf(store, f"{name}.bh", np.zeros(3 * hidden))


# ---------------------------------------------------------------------------
# residual trunk
# ---------------------------------------------------------------------------

@dataclass
class ResNetConfig:
    channels: tuple = (64, 128, 256, 512)
    blocks: tuple = (2, 2, 1, 1)
    use_bn: bool = True

    @property
    def out_dim(self):
        return self.channels[-1]


MICRO_CHANNELS = (8, 16, 32, 64)


def micro_resnet_config(use_bn=True):
    return ResNetConfig(channels=MICRO_CHANNELS, use_bn=use_bn)


def build_resnet14(store, prefix, cfg, rng):
    bias = not cfg.use_bn
    add_conv(store, f"{prefix}.stem", rng, cfg.channels[0], 1, 7, 7, bias)
    if cfg.use_bn:
        add_bn(store, f"{prefix}.stem.bn", cfg.channels[0])
    in_ch = cfg.channels[0]
    for s, (ch, n_blocks) in enumerate(zip(cfg.channels, cfg.blocks)):
        for b in range(n_blocks):
            name = f"{prefix}.s{s}.b{b}"
            add_conv(store, f"{name}.conv1", rng, ch, in_ch, 3, 3, bias)
            add_conv(store, f"{name}.conv2", rng, ch, ch, 3, 3, bias)
            if cfg.use_bn:
                add_bn(store, f"{name}.bn1", ch)
                add_bn(store, f"{name}.bn2", ch)
            if b == 0:  # stage entry reshapes: freq stride 2 (and channels may grow)
                add_conv(store, f"{name}.proj", rng, ch, in_ch, 1, 1, bias)
                if cfg.use_bn:
                    add_bn(store, f"{name}.bnp", ch)
            in_ch = ch


def _norm(x, store, name, train_mode):
    """Per-channel normalization + learned affine.

    Training normalizes by the current input's statistics with the exact
    normalization gradient (channel_norm) and updates running averages;
    eval folds the running statistics in as constants.
    """
    gamma = store[f"{name}.gamma"]
    beta = store[f"{name}.beta"]
    rmean = store[f"{name}.rmean"]
    rvar = store[f"{name}.rvar"]
    if train_mode:
        red = tuple(d for d in range(x.data.ndim) if d != 1)
        rmean.data = (1.0 - BN_MOMENTUM) * rmean.data \
            + BN_MOMENTUM * x.data.mean(axis=red)
        rvar.data = (1.0 - BN_MOMENTUM) * rvar.data \
            + BN_MOMENTUM * x.data.var(axis=red)
        xn = ad.channel_norm(x, eps=BN_EPS)
    else:
        inv = 1.0 / np.sqrt(rvar.data + BN_EPS)
        xn = ad.affine_channel(x, ad.constant(inv), ad.constant(-rmean.data * inv))
    return ad.affine_channel(xn, gamma, beta)


def _conv_unit(x, store, name, cfg, stride, train_mode, bn_name):
    w = store[f"{name}.w"]
    pad = ((w.data.shape[2] - 1) // 2, (w.data.shape[3] - 1) // 2)
    y = ad.conv2d(x, w, stride=stride, pad=pad)
    if cfg.use_bn:
        return _norm(y, store, bn_name, train_mode)
    ch = w.data.shape[0]
    return ad.affine_channel(y, ad.constant(np.ones(ch)), store[f"{name}.b"])


def resnet14_forward(features, store, prefix, cfg, train_mode, trace=None):
    """Run the trunk over a T x 40 feature tensor; returns T' x c4 frames,
    T' = ceil(T/4). `trace`, if a list, collects (name, shape) per layer."""
    n_frames = features.data.shape[0]
    if n_frames < 8:
        raise InputTooShort(f"{n_frames} frames < minimum of 8")
    x = ad.reshape(features, (1, 1, n_frames, features.data.shape[1]))

    x = _conv_unit(x, store, f"{prefix}.stem", cfg, (2, 2), train_mode,
                   f"{prefix}.stem.bn")
    x = ad.relu(x)
    if trace is not None:
        trace.append(("conv1", x.data.shape))
    x = ad.maxpool2d(x, kernel=(3, 3), stride=(2, 2), pad=(1, 1))
    if trace is not None:
        trace.append(("maxpool", x.data.shape))

    for s, (ch, n_blocks) in enumerate(zip(cfg.channels, cfg.blocks)):
        for b in range(n_blocks):
            name = f"{prefix}.s{s}.b{b}"
            stride = (1, 2) if b == 0 else (1, 1)
            y = ad.relu(_conv_unit(x, store, f"{name}.conv1", cfg, stride,
                                   train_mode, f"{name}.bn1"))
            y = _conv_unit(y, store, f"{name}.conv2", cfg, (1, 1),
                           train_mode, f"{name}.bn2")
            if b == 0:
                sc = _conv_unit(x, store, f"{name}.proj", cfg, stride,
                                train_mode, f"{name}.bnp")
            else:
                sc = x
            x = ad.relu(ad.add(y, sc))
        if trace is not None:
            trace.append((f"res_conv{s + 1}", x.data.shape))

    # 1 x c4 x T' x 1 -> T' x c4
    n_out = x.data.shape[2]
    x = ad.transpose(x, (0, 3, 2, 1))
    return ad.reshape(x, (n_out, cfg.out_dim))


# ---------------------------------------------------------------------------
# recurrent stacks
# ---------------------------------------------------------------------------

def _lstm_direction(inputs, store, name, hidden, reverse):
    n_frames, _ = inputs.data.shape
    xw = ad.matmul(inputs, store[f"{name}.wx"])
    xw = ad.affine_channel(xw, ad.constant(np.ones(4 * hidden)), store[f"{name}.b"])
    wh = store[f"{name}.wh"]
    h = ad.constant(np.zeros((1, hidden)))
    c = ad.constant(np.zeros((1, hidden)))
    steps = range(n_frames - 1, -1, -1) if reverse else range(n_frames)
    outs = [None] * n_frames
    for t in steps:
        pre = ad.add(ad.slice_(xw, ((t, t + 1), (0, 4 * hidden))), ad.matmul(h, wh))
        hc = ad.lstm_cell(pre, c)
        h = ad.slice_(hc, ((0, 1), (0, hidden)))
        c = ad.slice_(hc, ((0, 1), (hidden, 2 * hidden)))
        outs[t] = h
    return ad.concat(outs, axis=0)


def _gru_direction(inputs, store, name, hidden, reverse):
    n_frames, _ = inputs.data.shape
    gx = ad.matmul(inputs, store[f"{name}.wx"])
    gx = ad.affine_channel(gx, ad.constant(np.ones(3 * hidden)), store[f"{name}.bx"])
    wh = store[f"{name}.wh"]
    bh = store[f"{name}.bh"]
    ones = ad.constant(np.ones(3 * hidden))
    h = ad.constant(np.zeros((1, hidden)))
    steps = range(n_frames - 1, -1, -1) if reverse else range(n_frames)
    outs = [None] * n_frames
    for t in steps:
        gh = ad.affine_channel(ad.matmul(h, wh), ones, bh)
        h = ad.gru_cell(ad.slice_(gx, ((t, t + 1), (0, 3 * hidden))), gh, h)
        outs[t] = h
    return ad.concat(outs, axis=0)


def birnn_forward(inputs, store, prefix, layers, hidden, train_mode=False,
                  dropout_rate=0.0, rng=None, kind="lstm"):
    """Stacked bidirectional recurrence over T x d inputs -> T x 2*hidden.

    Dropout (inverted, mask per layer boundary) applies between stacked
    layers only when train_mode is set.
    """
    direction = _lstm_direction if kind == "lstm" else _gru_direction
    x = inputs
    expect = store[f"{prefix}.l0.fwd.wx"].data.shape[0]
    if x.data.shape[1] != expect:
        raise InvalidShape(f"rnn input width {x.data.shape[1]}, expected {expect}")
    for layer in range(layers):
        fwd = direction(x, store, f"{prefix}.l{layer}.fwd", hidden, reverse=False)
        bwd = direction(x, store, f"{prefix}.l{layer}.bwd", hidden, reverse=True)
        x = ad.concat([fwd, bwd], axis=1)
        if train_mode and dropout_rate > 0.0 and layer < layers - 1:
            mask = (rng.uniform(size=x.data.shape) >= dropout_rate).astype(np.float64)
            x = ad.dropout(x, mask, dropout_rate)
    return x


def blstm_forward(inputs, store, prefix, layers, hidden, train_mode=False,
                  dropout_rate=0.0, rng=None):
    return birnn_forward(inputs, store, prefix, layers, hidden, train_mode,
                         dropout_rate, rng, kind="lstm")


def add_birnn(store, prefix, rng, in_dim, hidden, layers, kind="lstm"):
    add_cell = add_lstm if kind == "lstm" else add_gru
    for layer in range(layers):
        d = in_dim if layer == 0 else 2 * hidden
        add_cell(store, f"{prefix}.l{layer}.fwd", rng, d, hidden)
        add_cell(store, f"{prefix}.l{layer}.bwd", rng, d, hidden)


def time_avg_pool(frames):
    """Coordinate-wise mean over the frame axis of a T x N tensor."""
    if frames.data.ndim != 2 or frames.data.shape[0] < 1:
        raise InvalidShape(f"cannot pool shape {frames.data.shape}")
    return ad.mean(frames, axis=0)

"""The three networks: CTC acoustic model (trunk + BLSTM + projection),
the dialect classifier head over the trunk's frame features, and the
single-stage baseline that reads raw log-mel features."""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .errors import InvalidShape
from .layers import ParamStore, ResNetConfig


@dataclass
class ModelConfig:
    scale: str = "micro"            # full | micro
    vocab_size: int = 12            # phoneme units; blank is class 0, width V+1
    n_dialects: int = 4
    am_hidden: int = 0              # 0 -> scale default
    am_layers: int = 2
    head_rnn: str = "blstm"         # blstm | bgru
    head_layers: int = 2
    head_hidden: int = 0
    head_pool: str = "logits"       # logits | hidden
    use_bn: bool = True

    def __post_init__(self):
        if self.scale not in ("full", "micro"):
            raise InvalidShape(f"unknown scale {self.scale!r}")
        if self.am_hidden == 0:
            self.am_hidden = 256 if self.scale == "full" else 16
        if self.head_hidden == 0:
            self.head_hidden = 256 if self.scale == "full" else 16

    def resnet(self):
        if self.scale == "full":
            return ResNetConfig(use_bn=self.use_bn)
        return layers.micro_resnet_config(use_bn=self.use_bn)

    def to_dict(self):
        return {
            "scale": self.scale,
            "vocab_size": self.vocab_size,
            "n_dialects": self.n_dialects,
            "am_hidden": self.am_hidden,
            "am_layers": self.am_layers,
            "head_rnn": self.head_rnn,
            "head_layers": self.head_layers,
            "head_hidden": self.head_hidden,
            "head_pool": self.head_pool,
            "use_bn": self.use_bn,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class AmModel:
    """Trunk + BLSTM + linear projection to V+1 classes with per-frame
    log_softmax. The classifier taps `intermediate`, the trunk output
    before the recurrent layers."""

    def __init__(self, config, store=None, seed=0):
        self.config = config
        self.rcfg = config.resnet()
        if store is None:
            store = layers.init_params(self._build, seed)
        self.store = store

    def _build(self, store, rng):
        cfg = self.config
        layers.build_resnet14(store, "trunk", self.rcfg, rng)
        layers.add_birnn(store, "rnn", rng, self.rcfg.out_dim,
                         cfg.am_hidden, cfg.am_layers, kind="lstm")
        layers.add_linear(store, "proj", rng, 2 * cfg.am_hidden, cfg.vocab_size + 1)

    def forward(self, features, train_mode=False, trace=None):
        """features: T x 40 array or Tensor -> (lattice T' x (V+1), intermediate T' x c4)."""
        if not isinstance(features, ad.Tensor):
            features = ad.constant(np.asarray(features, dtype=np.float64))
        inter = layers.resnet14_forward(features, self.store, "trunk", self.rcfg,
                                        train_mode, trace=trace)
        x = layers.blstm_forward(inter, self.store, "rnn", self.config.am_layers,
                                 self.config.am_hidden, train_mode=train_mode)
        if trace is not None:
            trace.append(("blstm", x.data.shape))
        logits = ad.matmul(x, self.store["proj.w"])
        logits = ad.affine_channel(
            logits, ad.constant(np.ones(self.config.vocab_size + 1)),
            self.store["proj.b"])
        lattice = ad.log_softmax(logits, axis=1)
        if trace is not None:
            trace.append(("output", lattice.data.shape))
        return lattice, inter

    def trunk_param_count(self):
        return self.store.param_count(prefix="trunk", trainable_only=True)


class FrameClassifierModel:
    """Trunk + per-frame linear to V+1 (no recurrence), trained with
    frame-wise cross-entropy against forced alignments. Shares the
    intermediate tap point with the acoustic model."""

    def __init__(self, config, store=None, seed=0):
        self.config = config
        self.rcfg = config.resnet()
        if store is None:
            store = layers.init_params(self._build, seed)
        self.store = store

    def _build(self, store, rng):
        layers.build_resnet14(store, "trunk", self.rcfg, rng)
        layers.add_linear(store, "proj", rng, self.rcfg.out_dim,
                          self.config.vocab_size + 1)

    def forward(self, features, train_mode=False):
        if not isinstance(features, ad.Tensor):
            features = ad.constant(np.asarray(features, dtype=np.float64))
        inter = layers.resnet14_forward(features, self.store, "trunk", self.rcfg,
                                        train_mode)
        logits = ad.matmul(inter, self.store["proj.w"])
        logits = ad.affine_channel(
            logits, ad.constant(np.ones(self.config.vocab_size + 1)),
            self.store["proj.b"])
        return ad.log_softmax(logits, axis=1), inter


class LidHead:
    """Recurrent dialect classifier over frame features: RNN -> per-frame
    linear logits -> time average -> log_softmax (or pool the hidden
    states first with head_pool='hidden')."""

    def __init__(self, config, in_dim, store=None, seed=0):
        self.config = config
        self.in_dim = in_dim
        if store is None:
            store = layers.init_params(self._build, seed)
        self.store = store

    @property
    def kind(self):
        return "lstm" if self.config.head_rnn == "blstm" else "gru"

    def _build(self, store, rng):
        cfg = self.config
        layers.add_birnn(store, "rnn", rng, self.in_dim, cfg.head_hidden,
                         cfg.head_layers, kind=self.kind)
        layers.add_linear(store, "cls", rng, 2 * cfg.head_hidden, cfg.n_dialects)

    def forward(self, inter, train_mode=False, dropout_rate=0.0, rng=None):
        if not isinstance(inter, ad.Tensor):
            inter = ad.constant(np.asarray(inter, dtype=np.float64))
        cfg = self.config
        x = layers.birnn_forward(inter, self.store, "rnn", cfg.head_layers,
                                 cfg.head_hidden, train_mode=train_mode,
                                 dropout_rate=dropout_rate, rng=rng, kind=self.kind)
        if train_mode and dropout_rate > 0.0:
            mask = (rng.uniform(size=x.data.shape) >= dropout_rate).astype(np.float64)
            x = ad.dropout(x, mask, dropout_rate)
        if cfg.head_pool == "hidden":
            pooled = layers.time_avg_pool(x)
            pooled = ad.reshape(pooled, (1, 2 * cfg.head_hidden))
            logits = ad.matmul(pooled, self.store["cls.w"])
            logits = ad.affine_channel(
                logits, ad.constant(np.ones(cfg.n_dialects)), self.store["cls.b"])
            logits = ad.reshape(logits, (cfg.n_dialects,))
        else:
            frame_logits = ad.matmul(x, self.store["cls.w"])
            frame_logits = ad.affine_channel(
                frame_logits, ad.constant(np.ones(cfg.n_dialects)), self.store["cls.b"])
            logits = layers.time_avg_pool(frame_logits)
        return ad.log_softmax(logits, axis=0)


class BaselineModel:
    """2-layer BLSTM directly over the 40-dim features, linear to the
    dialect count, time average, log_softmax."""

    IN_DIM = 40

    def __init__(self, config, store=None, seed=0):
        self.config = config
        if store is None:
            store = layers.init_params(self._build, seed)
        self.store = store

    def _build(self, store, rng):
        cfg = self.config
        layers.add_birnn(store, "rnn", rng, self.IN_DIM, cfg.head_hidden, 2,
                         kind="lstm")
        layers.add_linear(store, "cls", rng, 2 * cfg.head_hidden, cfg.n_dialects)

    def forward(self, features, train_mode=False, dropout_rate=0.0, rng=None):
        if not isinstance(features, ad.Tensor):
            features = ad.constant(np.asarray(features, dtype=np.float64))
        cfg = self.config
        x = layers.blstm_forward(features, self.store, "rnn", 2, cfg.head_hidden,
                                 train_mode=train_mode, dropout_rate=dropout_rate,
                                 rng=rng)
        if train_mode and dropout_rate > 0.0:
            mask = (rng.uniform(size=x.data.shape) >= dropout_rate).astype(np.float64)
            x = ad.dropout(x, mask, dropout_rate)
        frame_logits = ad.matmul(x, self.store["cls.w"])
        frame_logits = ad.affine_channel(
            frame_logits, ad.constant(np.ones(cfg.n_dialects)), self.store["cls.b"])
        return ad.log_softmax(layers.time_avg_pool(frame_logits), axis=0)


def param_count(model, prefix=None):
    """Total scalar parameters; pass prefix='trunk' for the CNN figure."""
    return model.store.param_count(prefix=prefix, trainable_only=True)


def cross_entropy(log_probs, target):
    """Multi-class cross-entropy over a log-probability Tensor.

    `target` is a class index or a distribution; returns a scalar Tensor
    -sum(target * log_probs). For graph training, target stays constant.
    """
    n = log_probs.data.shape[-1]
    if np.isscalar(target) or isinstance(target, (int, np.integer)):
        dist = np.zeros(n)
        dist[int(target)] = 1.0
    else:
        dist = np.asarray(target, dtype=np.float64)
        if dist.shape != log_probs.data.shape:
            raise InvalidShape("target distribution shape mismatch")
    picked = ad.sum_(ad.mul(log_probs, ad.constant(dist)))
    return ad.mul(picked, ad.constant(np.asarray(-1.0)))


def frame_cross_entropy(lattice, frame_labels):
    """Mean per-frame cross-entropy of a T x C log-prob lattice against
    integer class targets (one per frame)."""
    t, c = lattice.data.shape
    labels = np.asarray(frame_labels, dtype=np.int64)
    if labels.shape != (t,):
        raise InvalidShape(f"{labels.shape[0]} frame labels for {t} frames")
    onehot = np.zeros((t, c))
    onehot[np.arange(t), labels] = 1.0
    total = ad.sum_(ad.mul(lattice, ad.constant(onehot)))
    return ad.mul(total, ad.constant(np.asarray(-1.0 / t)))


# ---------------------------------------------------------------------------
# phoneme vocabulary file: one unit per line, line k holds id k+1 (0 = blank)
# ---------------------------------------------------------------------------

def save_vocab(path, units):
    with open(path, "w", encoding="utf-8") as f:
        for u in units:
            f.write(u + "\n")


def load_vocab(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


def vocab_hash(units):
    h = hashlib.sha256()
    for u in units:
        h.update(u.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def default_vocab(vocab_size):
    return [f"ph{k:02d}" for k in range(1, vocab_size + 1)]

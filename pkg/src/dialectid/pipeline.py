"""Training orchestration: stage runners for the CTC acoustic model, the
dialect classifier, the frame-wise CNN, and the one-stage baseline, plus
the multi-stage drivers that chain them.

Stages are trained strictly in sequence; a downstream stage never
backpropagates into its upstream network (upstream forwards run in eval
mode outside any tape, so upstream bytes are identical before and after).
Batches group length-sorted utterances; each utterance keeps its true
length (no padding anywhere). Early stopping restores the best-epoch
parameters; the reported epochs-to-converge is the first epoch whose
validation metric comes within tolerance of the stage's best.
"""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import ctc, frontend, models
from .checkpoint import Checkpoint, save_checkpoint
from .corpus import Manifest
from .errors import DataFault, IncompatibleCheckpoint, InvalidShape
from .models import (AmModel, BaselineModel, FrameClassifierModel, LidHead,
                     ModelConfig)
from .optim import AdamState, adam_step

STAGE_DEFAULTS = {
    "am": {"lr": 1e-3, "dropout": 0.0},
    "frame_ce": {"lr": 1e-3, "dropout": 0.0},
    "lid": {"lr": 3e-4, "dropout": 0.5},
    "baseline": {"lr": 3e-4, "dropout": 0.5},
}


@dataclass
class TrainConfig:
    stage: str = "am"
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 8
    max_epochs: int = 20
    patience: int = 3
    dropout: float = 0.0
    seed: int = 0
    val_fraction: float = 0.2
    min_improve: float = 1e-3

    def __post_init__(self):
        if self.stage not in STAGE_DEFAULTS:
            raise InvalidShape(f"unknown stage {self.stage!r}")
        if self.stage in ("am", "frame_ce") and self.dropout != 0.0:
            raise InvalidShape("acoustic stages train without dropout")
        if self.max_epochs < 1:
            raise InvalidShape("max_epochs must be at least 1")

    @classmethod
    def for_stage(cls, stage, **overrides):
        kw = dict(STAGE_DEFAULTS[stage])
        kw.update(overrides)
        return cls(stage=stage, **kw)


@dataclass
class ConvergenceLog:
    stages: list = field(default_factory=list)  # (stage name, epochs to converge)

    def add(self, name, epochs):
        self.stages.append((name, int(epochs)))

    def to_dict(self):
        return {"stages": [{"stage": s, "epochs": e} for s, e in self.stages]}


class FeatureProvider:
    """Normalized log-mel features per utterance with an in-memory cache
    and an optional on-disk cache directory of .lmfb files."""

    def __init__(self, root, cache_dir=None, config=None):
        self.root = str(root)
        self.cache_dir = str(cache_dir) if cache_dir else None
        self.config = config or frontend.FrontendConfig()
        self._mem = {}

    def get(self, record):
        feats = self._mem.get(record.utt_id)
        if feats is not None:
            return feats
        if self.cache_dir:
            path = os.path.join(self.cache_dir, record.utt_id + ".lmfb")
            if os.path.exists(path):
                feats = frontend.load_feature_cache(path)
                self._mem[record.utt_id] = feats
                return feats
        wav = frontend.read_wav(os.path.join(self.root, record.path))
        feats = frontend.log_mel_features(wav, self.config)
        self._mem[record.utt_id] = feats
        return feats

    def write_cache(self, manifest):
        os.makedirs(self.cache_dir, exist_ok=True)
        for record in manifest:
            path = os.path.join(self.cache_dir, record.utt_id + ".lmfb")
            if not os.path.exists(path):
                wav = frontend.read_wav(os.path.join(self.root, record.path))
                frontend.save_feature_cache(path, frontend.log_mel_features(wav, self.config))


def split_train_val(manifest, fraction, seed):
    """Deterministic validation carve-out from the training manifest."""
    records = list(manifest)
    if fraction <= 0.0 or len(records) < 2:
        return records, []
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = max(1, int(round(fraction * len(records))))
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val


def edit_distance(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class _JsonlLogger:
    def __init__(self, path):
        self.path = str(path) if path else None
        if self.path:
            os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)

    def write(self, obj):
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(obj, sort_keys=True) + "\n")


def _epochs_to_converge(history, higher_better, tol):
    vals = np.asarray(history, dtype=np.float64)
    best = vals.max() if higher_better else vals.min()
    for i, v in enumerate(vals, start=1):
        if higher_better:
            if v >= best - tol * max(abs(best), 1.0):
                return i
        else:
            if v <= best + tol * max(abs(best), 1.0):
                return i
    return len(vals)


def _run_stage(stage_name, store, records, step_fn, val_fn, config, logger):
    """Shared batch/epoch loop.

    step_fn(record, rng) -> (loss, {param name: grad}) or None to skip;
    val_fn() -> (metric, higher_better, extras dict).
    Returns (history of val metrics, epochs_to_converge, best_epoch).
    """
    rng = np.random.default_rng(config.seed)
    params = store.trainable()
    state = AdamState()
    order = sorted(range(len(records)), key=lambda i: (records[i].duration,
                                                       records[i].utt_id))
    batches = [order[i:i + config.batch_size]
               for i in range(0, len(order), config.batch_size)]

    history = []
    best_metric = None
    best_epoch = 0
    best_state = None
    higher_better = True
    wait = 0
    for epoch in range(1, config.max_epochs + 1):
        if epoch == 1:
            # shortest utterances first on the first pass; a denser
            # label-to-frame ratio speeds up the early CTC phase
            batch_order = np.arange(len(batches))
        else:
            batch_order = rng.permutation(len(batches))
        losses = []
        skipped = 0
        for bi in batch_order:
            acc = {}
            n_ok = 0
            for idx in batches[bi]:
                out = step_fn(records[idx], rng)
                if out is None:
                    skipped += 1
                    continue
                loss, grads = out
                losses.append(loss)
                n_ok += 1
                for k, g in grads.items():
                    if k in acc:
                        acc[k] = acc[k] + g
                    else:
                        acc[k] = g
            if n_ok == 0:
                continue
            if n_ok > 1:
                for k in acc:
                    acc[k] = acc[k] / n_ok
            adam_step(params, acc, state, config.lr, config.weight_decay)

        metric, higher_better, extras = val_fn()
        history.append(metric)
        entry = {"stage": stage_name, "epoch": epoch,
                 "train_loss": float(np.mean(losses)) if losses else None,
                 "val_metric": metric, "skipped": skipped}
        entry.update(extras)
        logger.write(entry)

        improved = best_metric is None or (
            metric > best_metric + config.min_improve * max(abs(best_metric), 1.0)
            if higher_better else
            metric < best_metric - config.min_improve * max(abs(best_metric), 1.0))
        if best_metric is None or (metric > best_metric if higher_better
                                   else metric < best_metric):
            best_metric = metric
            best_epoch = epoch
            best_state = {n: t.data.copy() for n, t in store.items()}
        if improved:
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    if best_state is not None:
        for name, t in store.items():
            t.data = best_state[name]
    return (history,
            _epochs_to_converge(history, higher_better, config.min_improve),
            best_epoch)


# ---------------------------------------------------------------------------
# stage trainers
# ---------------------------------------------------------------------------

def _frames_after_trunk(n_frames):
    return -(-n_frames // 4)


def train_am_ctc(manifest, model_config, config, features, logger=None):
    """Stage 1: CTC over phoneme labels; the whole network (trunk, BLSTM,
    projection) receives gradients. Utterances whose label cannot fit the
    downsampled lattice are skipped and counted."""
    logger = logger or _JsonlLogger(None)
    am = AmModel(model_config, seed=config.seed)
    train_recs, val_recs = split_train_val(manifest, config.val_fraction, config.seed)
    skip_count = {"n": 0}
    trainable = am.store.trainable()

    def feasible(record, feats):
        return _frames_after_trunk(feats.shape[0]) >= ctc.min_frames(record.labels)

    def step(record, rng):
        feats = features.get(record)
        if not feasible(record, feats):
            skip_count["n"] += 1
            warnings.warn(f"{record.utt_id}: label needs more frames than "
                          f"the lattice provides; skipped")
            return None
        with ad.Tape():
            lattice, _ = am.forward(feats, train_mode=True)
            loss, grad = ctc.ctc_loss_grad(lattice.data, record.labels)
            gmap = ad.backward(lattice, seed=grad)
        grads = {n: gmap[t.node_id].data for n, t in trainable if t.node_id in gmap}
        return loss / max(len(record.labels), 1), grads

    def validate():
        recs = val_recs or train_recs
        losses = []
        err_tokens = 0
        ref_tokens = 0
        for record in recs:
            feats = features.get(record)
            if not feasible(record, feats):
                continue
            lattice, _ = am.forward(feats, train_mode=False)
            loss, _ = ctc.ctc_loss_grad(lattice.data, record.labels)
            losses.append(loss / max(len(record.labels), 1))
            hyp = ctc.ctc_greedy_decode(lattice.data)
            err_tokens += edit_distance(hyp, record.labels)
            ref_tokens += len(record.labels)
        mean_loss = float(np.mean(losses)) if losses else np.inf
        per = err_tokens / max(ref_tokens, 1)
        return mean_loss, False, {"val_phone_error_rate": round(per, 4)}

    history, conv, best_epoch = _run_stage("am", am.store, train_recs, step,
                                           validate, config, logger)
    meta = {
        "stage": "am",
        "model_config": model_config.to_dict(),
        "epoch": best_epoch,
        "history": history,
        "epochs_to_converge": conv,
        "skipped": skip_count["n"],
        "vocab_hash": models.vocab_hash(models.default_vocab(model_config.vocab_size)),
    }
    return Checkpoint(am.store, meta)


def _check_compatible(am_meta, model_config):
    expected = models.vocab_hash(models.default_vocab(model_config.vocab_size))
    if am_meta.get("vocab_hash") != expected:
        raise IncompatibleCheckpoint("vocabulary hash mismatch between the "
                                     "checkpoint and the requested configuration")
    ck = am_meta.get("model_config", {})
    for key in ("scale", "vocab_size"):
        if ck.get(key) != getattr(model_config, key):
            raise IncompatibleCheckpoint(f"checkpoint {key}={ck.get(key)!r} vs "
                                         f"requested {getattr(model_config, key)!r}")


def _intermediates_from(forward, records, features):
    cache = {}
    for record in records:
        cache[record.utt_id] = forward(features.get(record))
    return cache


def _train_classifier(stage_name, head_store, head_forward, manifest, config,
                      inputs_for, logger):
    """Shared trainer for the dialect classifiers (stage-2 head and the
    baseline): cross-entropy on utterance labels, accuracy as the metric."""
    train_recs, val_recs = split_train_val(manifest, config.val_fraction, config.seed)

    def step(record, rng):
        with ad.Tape():
            logp = head_forward(inputs_for(record), True, rng)
            loss_t = models.cross_entropy(logp, record.dialect)
            gmap = ad.backward(loss_t)
        grads = {n: gmap[t.node_id].data
                 for n, t in head_store.trainable() if t.node_id in gmap}
        return float(loss_t.data), grads

    def validate():
        recs = val_recs or train_recs
        hits = 0
        losses = []
        for record in recs:
            logp = head_forward(inputs_for(record), False, None)
            losses.append(-float(logp.data[record.dialect]))
            hits += int(np.argmax(logp.data) == record.dialect)
        acc = hits / len(recs)
        return acc, True, {"val_loss": float(np.mean(losses))}

    return _run_stage(stage_name, head_store, train_recs, step, validate,
                      config, logger)


def train_lid_on_intermediate(manifest, am_checkpoint, model_config, config,
                              features, logger=None, tap_forward=None):
    """Stage 2: classifier over the frozen upstream network's frame
    features. The upstream runs eval-mode outside any tape; its bytes are
    untouched. Intermediates are computed once per utterance."""
    logger = logger or _JsonlLogger(None)
    _check_compatible(am_checkpoint.meta, model_config)
    upstream_cfg = ModelConfig.from_dict(am_checkpoint.meta["model_config"])
    if tap_forward is None:
        if am_checkpoint.meta.get("stage") == "frame_ce":
            upstream = FrameClassifierModel(upstream_cfg, store=am_checkpoint.store)
        else:
            upstream = AmModel(upstream_cfg, store=am_checkpoint.store)
        tap_forward = lambda feats: upstream.forward(feats, train_mode=False)[1].data

    frozen_before = am_checkpoint.store.state_bytes()
    inter = _intermediates_from(tap_forward, list(manifest), features)
    in_dim = next(iter(inter.values())).shape[1]
    head = LidHead(model_config, in_dim=in_dim, seed=config.seed)

    def head_forward(x, train_mode, rng):
        return head.forward(x, train_mode=train_mode,
                            dropout_rate=config.dropout if train_mode else 0.0,
                            rng=rng)

    history, conv, best_epoch = _train_classifier(
        "lid", head.store, head_forward, manifest, config,
        lambda record: inter[record.utt_id], logger)

    if am_checkpoint.store.state_bytes() != frozen_before:
        raise DataFault("frozen upstream parameters changed during the LID stage")
    meta = {
        "stage": "lid",
        "model_config": model_config.to_dict(),
        "in_dim": in_dim,
        "epoch": best_epoch,
        "history": history,
        "epochs_to_converge": conv,
        "vocab_hash": am_checkpoint.meta["vocab_hash"],
    }
    return Checkpoint(head.store, meta)


def train_baseline(manifest, model_config, config, features, logger=None):
    """One-stage reference: BLSTM straight on the features, dialect labels only."""
    logger = logger or _JsonlLogger(None)
    model = BaselineModel(model_config, seed=config.seed)

    def fwd(x, train_mode, rng):
        return model.forward(x, train_mode=train_mode,
                             dropout_rate=config.dropout if train_mode else 0.0,
                             rng=rng)

    history, conv, best_epoch = _train_classifier(
        "baseline", model.store, fwd, manifest, config,
        lambda record: features.get(record), logger)
    meta = {
        "stage": "baseline",
        "model_config": model_config.to_dict(),
        "epoch": best_epoch,
        "history": history,
        "epochs_to_converge": conv,
        "vocab_hash": models.vocab_hash(models.default_vocab(model_config.vocab_size)),
    }
    return Checkpoint(model.store, meta)


def align_corpus(manifest, am_checkpoint, features):
    """Forced alignment of every utterance at lattice resolution.

    Returns (rows, skipped): rows are (utt_id, per-frame class ids);
    infeasible utterances are skipped and counted."""
    cfg = ModelConfig.from_dict(am_checkpoint.meta["model_config"])
    am = AmModel(cfg, store=am_checkpoint.store)
    rows = []
    skipped = 0
    for record in manifest:
        feats = features.get(record)
        if _frames_after_trunk(feats.shape[0]) < ctc.min_frames(record.labels):
            skipped += 1
            continue
        lattice, _ = am.forward(feats, train_mode=False)
        rows.append((record.utt_id, ctc.ctc_forced_align(lattice.data, record.labels)))
    return rows, skipped


def train_frame_ce_cnn(manifest, alignments, model_config, config, features,
                       logger=None):
    """Three-stage middle: a fresh trunk + per-frame projection trained
    with frame-wise cross-entropy against the aligned classes (blank kept
    as class 0)."""
    logger = logger or _JsonlLogger(None)
    model = FrameClassifierModel(model_config, seed=config.seed)
    records = [r for r in manifest if r.utt_id in alignments]
    train_recs, val_recs = split_train_val(
        Manifest(records, manifest.split), config.val_fraction, config.seed)
    trainable = model.store.trainable()

    def check_lengths(record, feats):
        frame_labels = alignments[record.utt_id]
        if len(frame_labels) != _frames_after_trunk(feats.shape[0]):
            raise DataFault(f"{record.utt_id}: alignment of {len(frame_labels)} "
                            f"frames vs lattice of "
                            f"{_frames_after_trunk(feats.shape[0])}")
        return frame_labels

    def step(record, rng):
        feats = features.get(record)
        frame_labels = check_lengths(record, feats)
        with ad.Tape():
            lattice, _ = model.forward(feats, train_mode=True)
            loss_t = models.frame_cross_entropy(lattice, frame_labels)
            gmap = ad.backward(loss_t)
        grads = {n: gmap[t.node_id].data for n, t in trainable if t.node_id in gmap}
        return float(loss_t.data), grads

    def validate():
        recs = val_recs or train_recs
        hit = 0
        total = 0
        losses = []
        for record in recs:
            feats = features.get(record)
            frame_labels = check_lengths(record, feats)
            lattice, _ = model.forward(feats, train_mode=False)
            losses.append(float(models.frame_cross_entropy(lattice, frame_labels).data))
            hit += int(np.sum(lattice.data.argmax(axis=1) == np.asarray(frame_labels)))
            total += len(frame_labels)
        acc = hit / max(total, 1)
        return acc, True, {"val_loss": float(np.mean(losses)),
                           "val_frame_accuracy": round(acc, 4)}

    history, conv, best_epoch = _run_stage("frame_ce", model.store, train_recs,
                                           step, validate, config, logger)
    meta = {
        "stage": "frame_ce",
        "model_config": model_config.to_dict(),
        "epoch": best_epoch,
        "history": history,
        "epochs_to_converge": conv,
        "vocab_hash": models.vocab_hash(models.default_vocab(model_config.vocab_size)),
    }
    return Checkpoint(model.store, meta)


# ---------------------------------------------------------------------------
# system drivers
# ---------------------------------------------------------------------------

@dataclass
class SystemResult:
    kind: str
    out_dir: str
    checkpoints: dict
    convergence: ConvergenceLog


def _write_system(out_dir, kind, model_config, convergence, ckpts):
    os.makedirs(out_dir, exist_ok=True)
    for name, ckpt in ckpts.items():
        save_checkpoint(os.path.join(out_dir, f"{name}.ckpt"), ckpt)
    with open(os.path.join(out_dir, "system.json"), "w", encoding="utf-8") as f:
        json.dump({"kind": kind, "model_config": model_config.to_dict(),
                   "convergence": convergence.to_dict()}, f, indent=2, sort_keys=True)
    return SystemResult(kind, str(out_dir), ckpts, convergence)


def run_baseline(root, train_manifest, model_config, config, out_dir,
                 features=None):
    features = features or FeatureProvider(root)
    logger = _JsonlLogger(os.path.join(out_dir, "train_log.jsonl"))
    ckpt = train_baseline(train_manifest, model_config, config, features, logger)
    conv = ConvergenceLog()
    conv.add("baseline", ckpt.meta["epochs_to_converge"])
    return _write_system(out_dir, "baseline", model_config, conv,
                         {"baseline": ckpt})


def run_two_stage(root, train_manifest, model_config, configs, out_dir,
                  features=None):
    """configs: {'am': TrainConfig, 'lid': TrainConfig}."""
    features = features or FeatureProvider(root)
    os.makedirs(out_dir, exist_ok=True)
    logger = _JsonlLogger(os.path.join(out_dir, "train_log.jsonl"))
    am_ckpt = train_am_ctc(train_manifest, model_config, configs["am"],
                           features, logger)
    save_checkpoint(os.path.join(out_dir, "am.ckpt"), am_ckpt)
    lid_ckpt = train_lid_on_intermediate(train_manifest, am_ckpt, model_config,
                                         configs["lid"], features, logger)
    conv = ConvergenceLog()
    conv.add("am", am_ckpt.meta["epochs_to_converge"])
    conv.add("lid", lid_ckpt.meta["epochs_to_converge"])
    return _write_system(out_dir, "two_stage", model_config, conv,
                         {"am": am_ckpt, "lid": lid_ckpt})


def run_three_stage(root, train_manifest, model_config, configs, out_dir,
                    features=None, am_checkpoint=None):
    """configs: {'am': ..., 'frame_ce': ..., 'lid': ...}. An existing
    stage-1 checkpoint may be supplied; with equal seed and config the
    stage-1 training is deterministic, so this only skips recomputation."""
    features = features or FeatureProvider(root)
    os.makedirs(out_dir, exist_ok=True)
    logger = _JsonlLogger(os.path.join(out_dir, "train_log.jsonl"))
    if am_checkpoint is None:
        am_checkpoint = train_am_ctc(train_manifest, model_config, configs["am"],
                                     features, logger)
    save_checkpoint(os.path.join(out_dir, "am.ckpt"), am_checkpoint)

    rows, skipped = align_corpus(train_manifest, am_checkpoint, features)
    ctc.write_alignments(os.path.join(out_dir, "align.tsv"), rows)
    alignments = dict(rows)
    cnn_ckpt = train_frame_ce_cnn(train_manifest, alignments, model_config,
                                  configs["frame_ce"], features, logger)
    save_checkpoint(os.path.join(out_dir, "cnn.ckpt"), cnn_ckpt)

    lid_ckpt = train_lid_on_intermediate(train_manifest, cnn_ckpt, model_config,
                                         configs["lid"], features, logger)
    conv = ConvergenceLog()
    conv.add("am", am_checkpoint.meta["epochs_to_converge"])
    conv.add("frame_ce", cnn_ckpt.meta["epochs_to_converge"])
    conv.add("lid", lid_ckpt.meta["epochs_to_converge"])
    return _write_system(out_dir, "three_stage", model_config, conv,
                         {"am": am_checkpoint, "cnn": cnn_ckpt, "lid": lid_ckpt})

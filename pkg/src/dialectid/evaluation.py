"""Evaluation harness: overall / short / long accuracy, confusion
matrices, and side-by-side system comparison.

Inference runs per utterance in eval mode (no batch statistics), so
reports are deterministic and independent of test-set ordering. The
LID_THREADS environment variable caps optional utterance-level
parallelism (default 1, sequential).
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .checkpoint import load_checkpoint
from .errors import EmptyTestSet, InvalidShape, IoFault
from .models import AmModel, BaselineModel, FrameClassifierModel, LidHead, ModelConfig
from .pipeline import FeatureProvider


@dataclass
class Metrics:
    confusion: np.ndarray      # rows = truth, cols = prediction
    acc_all: float             # percentages in [0, 100]
    acc_short: float
    acc_long: float
    per_class: np.ndarray
    n_short: int
    n_long: int

    @property
    def n_total(self):
        return int(self.confusion.sum())


class System:
    """A loaded checkpoint chain with a features -> dialect log-prob map."""

    def __init__(self, kind, model_config, predict_fn):
        self.kind = kind
        self.model_config = model_config
        self._predict = predict_fn

    def predict_logp(self, feats):
        return self._predict(feats)

    def predict(self, feats):
        return int(np.argmax(self._predict(feats)))


def load_system(system_dir):
    """Build the inference path described by system.json in a run directory."""
    path = os.path.join(str(system_dir), "system.json")
    try:
        with open(path, encoding="utf-8") as f:
            desc = json.load(f)
    except OSError as e:
        raise IoFault(f"cannot read {path}: {e}") from e
    kind = desc["kind"]
    cfg = ModelConfig.from_dict(desc["model_config"])

    def ckpt(name):
        return load_checkpoint(os.path.join(str(system_dir), f"{name}.ckpt"))

    if kind == "baseline":
        model = BaselineModel(cfg, store=ckpt("baseline").store)
        return System(kind, cfg, lambda feats: model.forward(feats).data)
    if kind == "two_stage":
        am = AmModel(cfg, store=ckpt("am").store)
        lid = ckpt("lid")
        head = LidHead(cfg, in_dim=lid.meta["in_dim"], store=lid.store)
        return System(kind, cfg, lambda feats: head.forward(
            am.forward(feats)[1].data).data)
    if kind == "three_stage":
        cnn = FrameClassifierModel(cfg, store=ckpt("cnn").store)
        lid = ckpt("lid")
        head = LidHead(cfg, in_dim=lid.meta["in_dim"], store=lid.store)
        return System(kind, cfg, lambda feats: head.forward(
            cnn.forward(feats)[1].data).data)
    raise IoFault(f"unknown system kind {kind!r}")


def metrics_from_pairs(pairs, n_classes, threshold=3.0):
    """pairs: (truth, prediction, duration) triples."""
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    hit_short = n_short = hit_long = n_long = 0
    for truth, pred, duration in pairs:
        confusion[truth, pred] += 1
        if duration <= threshold:
            n_short += 1
            hit_short += int(truth == pred)
        else:
            n_long += 1
            hit_long += int(truth == pred)
    total = confusion.sum()
    diag = np.diag(confusion)
    row = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(row > 0, 100.0 * diag / np.maximum(row, 1), np.nan)
    return Metrics(
        confusion=confusion,
        acc_all=100.0 * diag.sum() / total,
        acc_short=100.0 * hit_short / n_short if n_short else float("nan"),
        acc_long=100.0 * hit_long / n_long if n_long else float("nan"),
        per_class=per_class,
        n_short=n_short,
        n_long=n_long,
    )


def evaluate(system, test_manifest, root=None, features=None, threshold=3.0):
    """Run the system over the manifest; per-utterance inference only."""
    records = list(test_manifest)
    if not records:
        raise EmptyTestSet("no test records")
    features = features or FeatureProvider(root)
    n_workers = int(os.environ.get("LID_THREADS", "1"))

    def infer(record):
        return (record.dialect, system.predict(features.get(record)),
                record.duration)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            pairs = list(pool.map(infer, records))
    else:
        pairs = [infer(r) for r in records]
    n_classes = system.model_config.n_dialects
    return metrics_from_pairs(pairs, n_classes, threshold)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

# 3x5 glyphs for annotating the heatmap
_GLYPHS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    ".": ("000", "000", "000", "000", "010"),
    "%": ("101", "001", "010", "100", "101"),
}


def _draw_text(img, row, col, text, value):
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is None:
            col += 4
            continue
        for dy, line in enumerate(glyph):
            for dx, bit in enumerate(line):
                if bit == "1" and 0 <= row + dy < img.shape[0] \
                        and 0 <= col + dx < img.shape[1]:
                    img[row + dy, col + dx] = value
        col += 4
    return col


def render_confusion(metrics, out_dir, prefix="confusion", cell=24):
    """Emit counts CSV, row-normalized percentage CSV, and a grayscale
    heatmap (binary PGM) annotated with per-class accuracy. Byte-identical
    for identical metrics."""
    out_dir = str(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise IoFault(f"cannot create {out_dir}: {e}") from e
    n = metrics.confusion.shape[0]
    counts_path = os.path.join(out_dir, f"{prefix}_counts.csv")
    pct_path = os.path.join(out_dir, f"{prefix}_percent.csv")
    pgm_path = os.path.join(out_dir, f"{prefix}.pgm")

    header = "truth\\pred," + ",".join(f"d{j}" for j in range(n))
    with open(counts_path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for i in range(n):
            f.write(f"d{i}," + ",".join(str(c) for c in metrics.confusion[i]) + "\n")

    row_sums = metrics.confusion.sum(axis=1, keepdims=True)
    pct = 100.0 * metrics.confusion / np.maximum(row_sums, 1)
    with open(pct_path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for i in range(n):
            f.write(f"d{i}," + ",".join(f"{v:.4f}" for v in pct[i]) + "\n")

    img = np.full((n * cell, n * cell), 255, dtype=np.uint8)
    for i in range(n):
        for j in range(n):
            shade = 255 - int(round(2.55 * pct[i, j]))
            img[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell] = shade
    for i in range(n):
        acc = metrics.per_class[i]
        if np.isnan(acc):
            continue
        text = f"{acc:.1f}%"
        shade = 255 - int(round(2.55 * pct[i, i]))
        ink = 0 if shade > 127 else 255
        _draw_text(img, i * cell + cell - 7, i * cell + 2, text, ink)
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(img.tobytes())
    return [counts_path, pct_path, pgm_path]


def compare_systems(named_metrics):
    """Text + CSV table over (name, Metrics) rows; columns All, <=3s, >3s,
    the best value per column flagged (ties flagged on every holder)."""
    if len(named_metrics) < 2:
        raise InvalidShape("need at least two systems to compare")
    cols = [("All", "acc_all"), ("<=3s", "acc_short"), (">3s", "acc_long")]
    best = {}
    for _, attr in cols:
        vals = [getattr(m, attr) for _, m in named_metrics]
        finite = [v for v in vals if not np.isnan(v)]
        best[attr] = max(finite) if finite else float("nan")

    def fmt(value, attr):
        if np.isnan(value):
            return "n/a"
        mark = "*" if value == best[attr] else ""
        return f"{value:.2f}{mark}"

    width = max(len(name) for name, _ in named_metrics)
    lines = [f"{'System':<{width}}  " + "  ".join(f"{h:>8}" for h, _ in cols)]
    csv_rows = ["system,acc_all,acc_short,acc_long,best_all,best_short,best_long"]
    for name, m in named_metrics:
        lines.append(f"{name:<{width}}  " +
                     "  ".join(f"{fmt(getattr(m, attr), attr):>8}" for _, attr in cols))
        flags = ",".join(str(int(getattr(m, attr) == best[attr])) for _, attr in cols)
        csv_rows.append(f"{name},{m.acc_all:.4f},{m.acc_short:.4f},"
                        f"{m.acc_long:.4f},{flags}")
    return "\n".join(lines), "\n".join(csv_rows)

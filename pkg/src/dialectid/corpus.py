"""Deterministic synthetic dialect corpus and manifest handling.

Each utterance is a concatenation of 80-200 ms phoneme segments. A
phoneme is a harmonic stack at a fixed fundamental (geometric ladder, so
identities stay separable on a mel grid). A dialect shows up in two ways:
every segment carries the dialect's pitch contour (flat / rising /
falling / dipping, plus a small offset for dialects beyond the first
four), and the phoneme sequence follows the dialect's preferred
transitions (a fixed permutation, taken with probability `follow_prob`).
Long-run phoneme frequencies stay uniform, so dialect identity lives in
realization and sequence dynamics rather than in time-averaged spectra;
a frame-mean linear probe stays well below the pipeline's reach.
Additive noise at a configurable SNR.

Manifests are UTF-8 TSV: utt_id, relative path, duration seconds,
dialect id, space-separated phoneme ids.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import frontend
from .errors import DataFault, DuplicateId, InvalidShape, IoFault, ParseFault

MIN_SEG_MS = 80.0
MAX_SEG_MS = 200.0
BASE_F0 = 220.0
F0_RATIO = 1.18
HARMONIC_AMPS = (1.0, 0.55, 0.3)
PITCH_JITTER = 0.015
EDGE_MS = 10.0

# per-dialect contour: (shape, strength); realized pitch multiplier over a
# segment is offset * contour(t/T)
CONTOUR_SHAPES = ("flat", "rise", "fall", "dip")


@dataclass
class SynthSpec:
    n_dialects: int = 4
    vocab_size: int = 12
    train_per_dialect: int = 50
    test_per_dialect: int = 20
    duration_range: tuple = (1.0, 6.0)
    sample_rate: int = 16000
    snr_db: float = 20.0
    contour_strength: float = 0.07
    follow_prob: float = 0.6
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.duration_range
        if not lo < 3.0 < hi:
            raise InvalidShape("duration range must straddle 3.0 s so both "
                               "test sub-tasks are non-empty")
        if self.sample_rate not in frontend.SUPPORTED_RATES:
            raise InvalidShape(f"unsupported sample rate {self.sample_rate}")


@dataclass
class UtteranceRecord:
    utt_id: str
    path: str
    duration: float
    dialect: int
    labels: list

    def validate(self, split):
        if self.duration <= 0:
            raise DataFault(f"{self.utt_id}: non-positive duration")
        if split == "train" and not self.labels:
            raise DataFault(f"{self.utt_id}: training record without labels")


@dataclass
class Manifest:
    records: list = field(default_factory=list)
    split: str = "train"

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def validate(self):
        seen = set()
        for r in self.records:
            if r.utt_id in seen:
                raise DuplicateId(r.utt_id)
            seen.add(r.utt_id)
            r.validate(self.split)
        return self


def phoneme_f0(phoneme, vocab_size):
    if not 1 <= phoneme <= vocab_size:
        raise DataFault(f"phoneme id {phoneme} outside 1..{vocab_size}")
    return BASE_F0 * F0_RATIO ** (phoneme - 1)


def dialect_transition(dialect, vocab_size):
    """Preferred next-phoneme map of a dialect (a fixed permutation).

    Each dialect favors its own phoneme-to-phoneme transitions while the
    long-run unigram distribution stays uniform, so dialect identity
    lives in the sequence dynamics, not in time-averaged spectra.
    """
    return np.random.default_rng([9173, dialect]).permutation(vocab_size) + 1


def sample_labels(rng, spec, dialect, n_segments):
    follow = dialect_transition(dialect, spec.vocab_size)
    labels = [int(rng.integers(1, spec.vocab_size + 1))]
    for _ in range(n_segments - 1):
        if rng.uniform() < spec.follow_prob:
            labels.append(int(follow[labels[-1] - 1]))
        else:
            labels.append(int(rng.integers(1, spec.vocab_size + 1)))
    return labels


def dialect_contour(dialect, strength, n, rate):
    """Pitch-multiplier curve for one segment of n samples."""
    tau = np.arange(n) / max(n - 1, 1)
    shape = CONTOUR_SHAPES[dialect % len(CONTOUR_SHAPES)]
    # dialects beyond the base four carry an extra static offset
    offset = 1.0 + 0.02 * (dialect // len(CONTOUR_SHAPES))
    if shape == "flat":
        curve = np.ones(n)
    elif shape == "rise":
        curve = 1.0 - strength + 2.0 * strength * tau
    elif shape == "fall":
        curve = 1.0 + strength - 2.0 * strength * tau
    else:  # dip
        curve = (1.0 + 0.5 * strength) - 6.0 * strength * tau * (1.0 - tau)
    return offset * curve


def _segment_plan(rng, duration, sr):
    """Segment sample counts filling the duration exactly; each at least
    half the minimum length (the remainder merges into the last one)."""
    total = int(round(duration * sr))
    min_seg = int(MIN_SEG_MS / 1000.0 * sr)
    max_seg = int(MAX_SEG_MS / 1000.0 * sr)
    lens = []
    left = total
    while left >= min_seg:
        seg = int(rng.integers(min_seg, max_seg + 1))
        seg = min(seg, left)
        lens.append(seg)
        left -= seg
    if left > 0:
        if lens:
            lens[-1] += left
        else:
            lens.append(left)
    return lens


def synth_utterance(rng, spec, dialect, duration):
    """Render one utterance; returns (samples in [-1, 1], phoneme labels)."""
    sr = spec.sample_rate
    lens = _segment_plan(rng, duration, sr)
    labels = sample_labels(rng, spec, dialect, len(lens))
    edge = int(EDGE_MS / 1000.0 * sr)
    pieces = []
    for seg_len, phoneme in zip(lens, labels):
        f0 = phoneme_f0(phoneme, spec.vocab_size)
        f0 *= 1.0 + rng.uniform(-PITCH_JITTER, PITCH_JITTER)
        contour = dialect_contour(dialect, spec.contour_strength, seg_len, sr)
        freq = f0 * contour
        phase = 2.0 * np.pi * np.cumsum(freq) / sr
        amp = rng.uniform(0.75, 1.25)
        seg = np.zeros(seg_len)
        for k, a in enumerate(HARMONIC_AMPS, start=1):
            if f0 * k * (1.0 + spec.contour_strength) < 0.45 * sr:
                seg += a * np.sin(k * phase)
        env = np.ones(seg_len)
        e = min(edge, seg_len // 2)
        if e > 0:
            ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(e) / e)
            env[:e] = ramp
            env[-e:] = ramp[::-1]
        pieces.append(amp * env * seg)
    signal = np.concatenate(pieces)
    rms = np.sqrt(np.mean(signal ** 2))
    noise = rng.normal(size=len(signal)) * (rms / 10.0 ** (spec.snr_db / 20.0))
    signal = signal + noise
    signal *= 0.6 / max(np.max(np.abs(signal)), 1e-9)
    return signal, labels


def synth_corpus(spec, out_dir):
    """Generate WAVs + manifests under out_dir; returns (train, test) Manifests.

    Deterministic from spec.seed: every utterance derives its own RNG
    stream, so generation order (or parallelism) cannot change content.
    """
    out_dir = str(out_dir)
    wav_dir = os.path.join(out_dir, "wavs")
    try:
        os.makedirs(wav_dir, exist_ok=True)
    except OSError as e:
        raise IoFault(f"cannot create {wav_dir}: {e}") from e
    if not os.access(out_dir, os.W_OK):
        raise IoFault(f"output directory {out_dir} is not writable")

    manifests = []
    for split_code, (split, per_dialect) in enumerate(
            [("train", spec.train_per_dialect), ("test", spec.test_per_dialect)]):
        records = []
        for dialect in range(spec.n_dialects):
            for idx in range(per_dialect):
                utt_rng = np.random.default_rng(
                    [spec.seed, split_code, dialect, idx])
                lo, hi = spec.duration_range
                duration = float(utt_rng.uniform(lo, hi))
                samples, labels = synth_utterance(utt_rng, spec, dialect, duration)
                utt_id = f"{split}_d{dialect}_{idx:04d}"
                rel = os.path.join("wavs", utt_id + ".wav")
                frontend.write_wav(os.path.join(out_dir, rel),
                                   frontend.Waveform(samples, spec.sample_rate))
                records.append(UtteranceRecord(
                    utt_id, rel, round(len(samples) / spec.sample_rate, 6),
                    dialect, labels))
        manifest = Manifest(records, split).validate()
        save_manifest(os.path.join(out_dir, f"{split}.tsv"), manifest)
        manifests.append(manifest)
    return tuple(manifests)


def save_manifest(path, manifest):
    with open(path, "w", encoding="utf-8") as f:
        for r in manifest.records:
            labels = " ".join(str(c) for c in r.labels)
            f.write(f"{r.utt_id}\t{r.path}\t{r.duration!r}\t{r.dialect}\t{labels}\n")


def load_manifest(path, split=None, root=None):
    """Parse and validate a manifest TSV.

    `split` defaults from the filename stem. With `root`, records whose
    audio file is missing are collected in the returned manifest's
    `missing` attribute.
    """
    if split is None:
        stem = os.path.splitext(os.path.basename(str(path)))[0]
        split = stem if stem in ("train", "test") else "train"
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseFault(f"line {line_no}: expected 5 fields, got {len(parts)}",
                                 line_no)
            utt_id, rel, dur_s, dia_s, labels_s = parts
            try:
                duration = float(dur_s)
                dialect = int(dia_s)
                labels = [int(c) for c in labels_s.split()] if labels_s.strip() else []
            except ValueError as e:
                raise ParseFault(f"line {line_no}: {e}", line_no) from e
            records.append(UtteranceRecord(utt_id, rel, duration, dialect, labels))
    manifest = Manifest(records, split).validate()
    manifest.missing = []
    if root is not None:
        manifest.missing = [r.utt_id for r in records
                            if not os.path.exists(os.path.join(str(root), r.path))]
    return manifest


def split_by_duration(manifest, threshold=3.0):
    """Partition records into (duration <= threshold, duration > threshold)."""
    short = [r for r in manifest.records if r.duration <= threshold]
    long_ = [r for r in manifest.records if r.duration > threshold]
    return (Manifest(short, manifest.split), Manifest(long_, manifest.split))


def frame_mean_probe_accuracy(root, train_manifest, test_manifest,
                              iters=400, lr=0.5, seed=0):
    """Dialect accuracy of a multinomial logistic regression on the
    frame-mean of raw (un-normalized) log-mel features.

    This is the corpus non-triviality probe: it must stay clearly below
    what the full pipeline reaches.
    """
    def gather(manifest):
        xs, ys = [], []
        for r in manifest.records:
            wav = frontend.read_wav(os.path.join(str(root), r.path))
            feats = frontend.log_mel_features(wav, normalize=False)
            xs.append(feats.mean(axis=0))
            ys.append(r.dialect)
        return np.array(xs), np.array(ys)

    x_train, y_train = gather(train_manifest)
    x_test, y_test = gather(test_manifest)
    mu, sd = x_train.mean(axis=0), x_train.std(axis=0) + 1e-8
    x_train = (x_train - mu) / sd
    x_test = (x_test - mu) / sd

    n_classes = int(max(y_train.max(), y_test.max())) + 1
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=0.01, size=(x_train.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y_train]
    for _ in range(iters):
        logits = x_train @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(x_train)
        w -= lr * (x_train.T @ g)
        b -= lr * g.sum(axis=0)
    pred = (x_test @ w + b).argmax(axis=1)
    return float(np.mean(pred == y_test))

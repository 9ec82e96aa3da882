"""Log-mel filterbank frontend.

Raw mono PCM audio is framed (25 ms window, 10 ms hop), Hamming-windowed,
turned into a power spectrum, projected onto 40 triangular mel filters,
log-compressed, and mean-normalized per coefficient over the whole
utterance. No pre-emphasis, no VAD, no deltas.
"""

import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import FilterbankDegenerate, InvalidShape, IoFault, TooShort

SUPPORTED_RATES = (8000, 16000)
CACHE_MAGIC = b"LMFB"


@dataclass
class Waveform:
    samples: np.ndarray  # float in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate not in SUPPORTED_RATES:
            raise InvalidShape(f"unsupported sample rate {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class FrontendConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    n_fft: int = 0          # 0 -> next power of two >= frame length
    fmin: float = 0.0
    fmax: float = 0.0       # 0 -> Nyquist
    floor_eps: float = 1e-10

    def frame_samples(self, sr):
        return int(round(sr * self.frame_ms / 1000.0))

    def hop_samples(self, sr):
        return int(round(sr * self.hop_ms / 1000.0))

    def fft_size(self, sr):
        if self.n_fft:
            return self.n_fft
        n = self.frame_samples(sr)
        size = 1
        while size < n:
            size *= 2
        return size


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(config, sample_rate):
    """Triangular filterbank, n_mels x (n_fft/2 + 1), peaks at 1.0.

    Filter centers are uniform on the mel scale; each triangle spans its
    neighbours' centers. Raises FilterbankDegenerate when the FFT grid is
    too coarse to give every filter a positive weight.
    """
    n_fft = config.fft_size(sample_rate)
    n_bins = n_fft // 2 + 1
    fmax = config.fmax if config.fmax else sample_rate / 2.0
    mels = np.linspace(hz_to_mel(config.fmin), hz_to_mel(fmax), config.n_mels + 2)
    edges = mel_to_hz(mels)
    freqs = np.arange(n_bins) * (sample_rate / n_fft)

    mat = np.zeros((config.n_mels, n_bins))
    for i in range(config.n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        mat[i] = np.maximum(0.0, np.minimum(up, down))
        if not np.any(mat[i] > 0.0):
            raise FilterbankDegenerate(
                f"mel filter {i} has no positive weight "
                f"(n_mels={config.n_mels}, n_fft={n_fft})")
    return mat


def power_spectrum(frame, n_fft):
    """|DFT|^2 of a real frame over bins 0..n_fft/2 (zero-padded)."""
    frame = np.asarray(frame, dtype=np.float64)
    if len(frame) > n_fft:
        raise InvalidShape(f"frame of {len(frame)} samples exceeds n_fft {n_fft}")
    spec = np.fft.rfft(frame, n=n_fft)
    return (spec.real ** 2 + spec.imag ** 2)


def frame_count(n_samples, frame, hop):
    return (n_samples - frame) // hop + 1


def log_mel_features(waveform, config=None, normalize=True):
    """T x n_mels matrix of utterance-mean-normalized log-mel energies.

    `normalize=False` skips the per-utterance mean subtraction (used by
    diagnostics that need the raw energies)."""
    if config is None:
        config = FrontendConfig()
    sr = waveform.sample_rate
    frame = config.frame_samples(sr)
    hop = config.hop_samples(sr)
    x = waveform.samples
    if len(x) < frame:
        raise TooShort(f"{len(x)} samples < one frame of {frame}")
    n_fft = config.fft_size(sr)
    if n_fft < frame:
        raise InvalidShape(f"n_fft {n_fft} < frame of {frame} samples")
    n_frames = frame_count(len(x), frame, hop)

    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hamming(frame)[None, :]
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    mel = power @ mel_matrix(config, sr).T
    feats = np.log(np.maximum(mel, config.floor_eps))
    if normalize:
        feats = feats - feats.mean(axis=0, keepdims=True)
    return feats


def read_wav(path):
    """Load 16-bit signed little-endian mono PCM."""
    try:
        with wave.open(str(path), "rb") as f:
            if f.getnchannels() != 1:
                raise IoFault(f"{path}: expected mono, got {f.getnchannels()} channels")
            if f.getsampwidth() != 2:
                raise IoFault(f"{path}: expected 16-bit PCM")
            sr = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as e:
        raise IoFault(f"{path}: {e}") from e
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, sr)


def write_wav(path, waveform):
    pcm = np.clip(np.round(waveform.samples * 32767.0), -32768, 32767).astype("<i2")
    try:
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(waveform.sample_rate)
            f.writeframes(pcm.tobytes())
    except OSError as e:
        raise IoFault(f"{path}: {e}") from e


def save_feature_cache(path, feats):
    """Binary cache: magic LMFB, u32 T, u32 n_mels, T*n_mels float32 LE."""
    feats = np.asarray(feats)
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
        f.write(feats.astype("<f4").tobytes())


def load_feature_cache(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CACHE_MAGIC:
            raise IoFault(f"{path}: bad magic {magic!r}")
        t, m = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(4 * t * m), dtype="<f4")
        if data.size != t * m:
            raise IoFault(f"{path}: truncated cache")
    return data.reshape(t, m).astype(np.float64)

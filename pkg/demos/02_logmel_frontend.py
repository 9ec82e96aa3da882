"""Log-mel frontend walk-through: synthesize a tone, extract features,
and show the gain-invariance property of utterance mean normalization."""
import numpy as np

from dialectid import frontend

sr = 16000
t = np.arange(int(1.2 * sr)) / sr
wave = frontend.Waveform(0.4 * np.sin(2 * np.pi * 440.0 * t)
                         + 0.2 * np.sin(2 * np.pi * 880.0 * t), sr)

feats = frontend.log_mel_features(wave)
print("feature matrix:", feats.shape, "(frames x mel bands)")
print("column means after normalization (first 5):", feats.mean(axis=0)[:5])

# the frame count follows (samples - frame) / hop + 1
cfg = frontend.FrontendConfig()
n = frontend.frame_count(len(wave.samples), cfg.frame_samples(sr), cfg.hop_samples(sr))
print("frame count formula:", n, "== matrix rows:", feats.shape[0])

# scaling the waveform does not change the normalized features
louder = frontend.Waveform(wave.samples * 3.0, sr)
diff = np.max(np.abs(frontend.log_mel_features(louder) - feats))
print("max |delta| under 3x gain:", diff)

# the mel filterbank itself: 40 triangles on the mel scale
mat = frontend.mel_matrix(cfg, sr)
print("filterbank:", mat.shape, "| peaks at bins:", mat.argmax(axis=1)[:8], "...")

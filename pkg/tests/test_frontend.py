import numpy as np
import pytest

from dialectid import frontend as fe
from dialectid.errors import FilterbankDegenerate, TooShort


def tone(freq, dur=1.0, sr=16000, amp=0.4):
    t = np.arange(int(dur * sr)) / sr
    return fe.Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


class TestMelMatrix:
    def test_shape_and_rows_nonzero(self):
        cfg = fe.FrontendConfig()
        mat = fe.mel_matrix(cfg, 16000)
        assert mat.shape == (40, 257)
        assert np.all(mat >= 0)
        assert np.all((mat > 0).any(axis=1))

    def test_row_maxima_strictly_increasing(self):
        mat = fe.mel_matrix(fe.FrontendConfig(), 16000)
        peaks = mat.argmax(axis=1)
        assert np.all(np.diff(peaks) > 0)

    def test_degenerate(self):
        with pytest.raises(FilterbankDegenerate):
            fe.mel_matrix(fe.FrontendConfig(n_mels=400, n_fft=64), 16000)


class TestPowerSpectrum:
    def test_zero_frame(self):
        np.testing.assert_array_equal(fe.power_spectrum(np.zeros(400), 512),
                                      np.zeros(257))

    def test_cosine_bin_concentration(self):
        n_fft = 512
        k = 32
        n = np.arange(n_fft)
        frame = np.cos(2 * np.pi * k * n / n_fft)  # rectangular window
        spec = fe.power_spectrum(frame, n_fft)
        assert spec.argmax() == k

    def test_parseval(self):
        rng = np.random.default_rng(0)
        frame = rng.normal(size=400)
        n_fft = 512
        spec = fe.power_spectrum(frame, n_fft)
        weights = np.full(n_fft // 2 + 1, 2.0)
        weights[0] = weights[-1] = 1.0  # DC and Nyquist are unpaired
        lhs = np.sum(spec * weights)
        rhs = n_fft * np.sum(frame ** 2)
        assert abs(lhs - rhs) / rhs < 1e-8


class TestLogMelFeatures:
    def test_frame_count_one_second(self):
        feats = fe.log_mel_features(tone(440.0, dur=1.0))
        assert feats.shape == (98, 40)  # (16000-400)/160 + 1

    def test_dc_signal_normalizes_to_zero(self):
        wav = fe.Waveform(np.full(8000, 0.5), 16000)
        feats = fe.log_mel_features(wav)
        np.testing.assert_allclose(feats, 0.0, atol=1e-9)

    def test_too_short(self):
        with pytest.raises(TooShort):
            fe.log_mel_features(fe.Waveform(np.zeros(300), 16000))

    def test_column_means_zero(self):
        feats = fe.log_mel_features(tone(523.0, dur=1.3))
        np.testing.assert_allclose(feats.mean(axis=0), 0.0, atol=1e-6)

    def test_gain_invariance(self):
        wav = tone(880.0, dur=0.8, amp=0.3)
        louder = fe.Waveform(wav.samples * 2.5, wav.sample_rate)
        a = fe.log_mel_features(wav)
        b = fe.log_mel_features(louder)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_always_40_columns(self):
        for dur in (0.5, 1.7):
            for sr in (8000, 16000):
                assert fe.log_mel_features(tone(300.0, dur=dur, sr=sr)).shape[1] == 40

    def test_deterministic(self):
        wav = tone(660.0)
        np.testing.assert_array_equal(fe.log_mel_features(wav),
                                      fe.log_mel_features(wav))


class TestIo:
    def test_wav_roundtrip(self, tmp_path):
        wav = tone(440.0, dur=0.5)
        path = tmp_path / "a.wav"
        fe.write_wav(path, wav)
        back = fe.read_wav(path)
        assert back.sample_rate == 16000
        assert len(back.samples) == len(wav.samples)
        assert np.max(np.abs(back.samples - wav.samples)) < 1.0 / 32768.0

    def test_feature_cache_roundtrip(self, tmp_path):
        feats = fe.log_mel_features(tone(440.0, dur=0.6))
        path = tmp_path / "a.lmfb"
        fe.save_feature_cache(path, feats)
        back = fe.load_feature_cache(path)
        assert back.shape == feats.shape
        np.testing.assert_allclose(back, feats, atol=1e-6)
        with open(path, "rb") as f:
            assert f.read(4) == b"LMFB"

import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_dft

from ditok import fbank
from ditok.errors import ConfigurationError, LengthError


class TestFrameFormula:
    def test_one_second(self):
        cfg = fbank.FbankConfig()
        assert fbank.frame_count(16000, cfg) == 98

    @settings(max_examples=50, deadline=None)
    @given(st.integers(400, 40000))
    def test_formula_matches_output(self, n):
        cfg = fbank.FbankConfig()
        feats = fbank.compute_fbank(np.zeros(n), cfg)
        assert feats.frames.shape == (1 + (n - 400) // 160, 80)


class TestComputeFbank:
    def test_silence_hits_log_floor(self):
        feats = fbank.compute_fbank(np.zeros(1600))
        assert np.all(feats.frames == np.log(1e-10))
        assert feats.frame_rate_hz == 100.0
        assert feats.source_tag == "fbank80"

    def test_too_short(self):
        with pytest.raises(LengthError):
            fbank.compute_fbank(np.zeros(399))

    def test_non_16k_config_rejected(self):
        cfg = fbank.FbankConfig(sample_rate_hz=8000, n_fft=256)
        with pytest.raises(ConfigurationError):
            fbank.compute_fbank(np.zeros(4000), cfg)

    def test_finite_on_finite_input(self):
        rng = np.random.default_rng(0)
        feats = fbank.compute_fbank(rng.normal(size=3200) * 1e4)
        assert np.all(np.isfinite(feats.frames))

    def test_sine_peak_stable_and_near_1khz(self):
        cfg = fbank.FbankConfig()
        t = np.arange(16000) / 16000.0
        pcm = 1000.0 * np.sin(2 * np.pi * 1000.0 * t)
        feats = fbank.compute_fbank(pcm, cfg)
        peaks = feats.frames.argmax(axis=1)
        assert np.all(peaks == peaks[0])
        # center frequency of the winning mel band should be near 1 kHz
        mel_pts = np.linspace(fbank.hz_to_mel(cfg.fmin_hz), fbank.hz_to_mel(cfg.fmax_hz), 82)
        center_hz = fbank.mel_to_hz(mel_pts[peaks[0] + 1])
        assert abs(center_hz - 1000.0) < 100.0

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(1)
        pcm = rng.normal(size=1200)
        fast = fbank.compute_fbank(pcm).frames
        slow = fbank.compute_fbank(pcm, fft=naive_dft).frames
        assert np.abs(fast - slow).max() < 1e-6

    def test_fft_path_equals_dft_within_tolerance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=512)
        fast = np.fft.rfft(x, 512)
        slow = naive_dft(x, 512)
        assert np.abs(fast - slow).max() / np.abs(slow).max() < 1e-6


class TestWav:
    def test_read_wav_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        samples = (rng.normal(size=800) * 3000).astype("<i2")
        p = tmp_path / "a.wav"
        with wave.open(str(p), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(16000)
            fh.writeframes(samples.tobytes())
        back = fbank.read_wav(p)
        assert np.array_equal(back, samples.astype(np.float64))

    def test_wrong_rate_rejected(self, tmp_path):
        p = tmp_path / "a.wav"
        with wave.open(str(p), "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(8000)
            fh.writeframes(b"\x00\x00" * 100)
        with pytest.raises(ConfigurationError):
            fbank.read_wav(p)


class TestSpecAugment:
    def _feat(self, T=30, D=80, seed=0):
        rng = np.random.default_rng(seed)
        from ditok.corpus_io import EmbeddingSequence
        return EmbeddingSequence(rng.normal(size=(T, D)) + 5.0, 100.0, "fbank80")

    def test_zero_masks_identity(self):
        feat = self._feat()
        out = fbank.spec_augment(feat, time_masks=0, freq_masks=0)
        assert np.array_equal(out.frames, feat.frames)

    def test_full_width_clamped(self):
        feat = self._feat(T=10)
        out = fbank.spec_augment(feat, time_masks=1, max_t=10_000, freq_masks=0, rng_seed=4)
        assert out.frames.shape == feat.frames.shape

    def test_deterministic(self):
        feat = self._feat()
        a = fbank.spec_augment(feat, rng_seed=7)
        b = fbank.spec_augment(feat, rng_seed=7)
        assert np.array_equal(a.frames, b.frames)

    def test_only_writes_zeros(self):
        feat = self._feat(seed=5)
        out = fbank.spec_augment(feat, rng_seed=9)
        changed = out.frames != feat.frames
        assert np.all(out.frames[changed] == 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 90), st.integers(0, 2**31))
    def test_shape_preserved(self, T, D, seed):
        from ditok.corpus_io import EmbeddingSequence
        rng = np.random.default_rng(seed)
        feat = EmbeddingSequence(rng.normal(size=(T, D)), 100.0, "x")
        out = fbank.spec_augment(feat, rng_seed=seed)
        assert out.frames.shape == (T, D)

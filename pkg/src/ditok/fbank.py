"""Baseline acoustic front-end: 80-channel log-mel filterbank at 100 Hz.

25 ms Hamming windows with a 10 ms hop over 16 kHz mono PCM, magnitude
spectrum via a 512-point real FFT, triangular HTK-mel filters, natural log
with a 1e-10 floor. SpecAugment zeroes random time spans and channel bands.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import EmbeddingSequence
from .errors import ConfigurationError, LengthError

LOG_FLOOR = 1e-10


@dataclass
class FbankConfig:
    sample_rate_hz: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 80
    n_fft: int = 512
    fmin_hz: float = 20.0
    fmax_hz: float | None = None  # defaults to Nyquist

    def __post_init__(self):
        if self.fmax_hz is None:
            self.fmax_hz = self.sample_rate_hz / 2
        if self.window_samples > self.n_fft:
            raise ConfigurationError(
                f"window of {self.window_samples} samples exceeds n_fft={self.n_fft}"
            )
        if self.n_mels < 1:
            raise ConfigurationError("n_mels must be >= 1")
        if not self.fmin_hz < self.fmax_hz:
            raise ConfigurationError(f"fmin {self.fmin_hz} must be below fmax {self.fmax_hz}")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate_hz * self.hop_ms / 1000.0))

    @property
    def frame_rate_hz(self) -> float:
        return 1000.0 / self.hop_ms


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FbankConfig) -> np.ndarray:
    """Triangular filters (n_mels x n_fft//2 + 1) on the HTK mel scale."""
    n_bins = cfg.n_fft // 2 + 1
    mel_points = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * cfg.sample_rate_hz / cfg.n_fft
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def frame_count(n_samples: int, cfg: FbankConfig) -> int:
    return 1 + (n_samples - cfg.window_samples) // cfg.hop_samples


def compute_fbank(pcm, cfg: FbankConfig | None = None,
                  fft=np.fft.rfft) -> EmbeddingSequence:
    """Log-mel features for mono PCM; `fft` is injectable so tests can swap
    in a naive DFT oracle."""
    cfg = cfg or FbankConfig()
    if cfg.sample_rate_hz != 16000:
        raise ConfigurationError(f"only 16 kHz input supported, got {cfg.sample_rate_hz}")
    x = np.asarray(pcm, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigurationError(f"pcm must be mono 1-D, got shape {x.shape}")
    win, hop = cfg.window_samples, cfg.hop_samples
    if x.size < win:
        raise LengthError(f"input of {x.size} samples shorter than window ({win})")
    n_frames = frame_count(x.size, cfg)
    window = np.hamming(win)
    fb = mel_filterbank(cfg)
    feats = np.empty((n_frames, cfg.n_mels))
    for t in range(n_frames):
        seg = x[t * hop : t * hop + win] * window
        spectrum = np.abs(fft(seg, cfg.n_fft))
        feats[t] = np.log(np.maximum(fb @ spectrum, LOG_FLOOR))
    return EmbeddingSequence(frames=feats, frame_rate_hz=cfg.frame_rate_hz,
                             source_tag="fbank80")


def read_wav(path) -> np.ndarray:
    """Mono 16 kHz 16-bit PCM only; returns int16 samples as float64."""
    with wave.open(str(Path(path)), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ConfigurationError(f"{path}: expected mono, got {fh.getnchannels()} channels")
        if fh.getframerate() != 16000:
            raise ConfigurationError(f"{path}: expected 16 kHz, got {fh.getframerate()}")
        if fh.getsampwidth() != 2:
            raise ConfigurationError(f"{path}: expected 16-bit samples")
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64)


def spec_augment(feat: EmbeddingSequence, time_masks: int = 2, max_t: int = 40,
                 freq_masks: int = 2, max_f: int = 15, rng_seed: int = 0) -> EmbeddingSequence:
    """Zero out random time spans and channel bands; shape is preserved and
    mask widths clamp to the input size."""
    feat.validate()
    rng = np.random.default_rng(rng_seed)
    out = feat.frames.copy()
    T, D = out.shape
    for _ in range(time_masks):
        width = int(rng.integers(0, min(max_t, T) + 1))
        start = int(rng.integers(0, T - width + 1))
        out[start : start + width, :] = 0.0
    for _ in range(freq_masks):
        width = int(rng.integers(0, min(max_f, D) + 1))
        start = int(rng.integers(0, D - width + 1))
        out[:, start : start + width] = 0.0
    return EmbeddingSequence(frames=out, frame_rate_hz=feat.frame_rate_hz,
                             source_tag=feat.source_tag)

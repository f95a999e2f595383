"""Spectral primitives: STFT, inverse STFT, magnitude, mel filterbank, log-mel.

All other modules build on these. Everything here is a pure function over
immutable values; nothing holds hidden state, so values are safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SAMPLE_RATE = 44100

# Toolkit-wide analysis configuration: window 2048, hop 512 at 44.1 kHz
# (86.1 Hz frame rate).
DEFAULT_WINDOW = 2048
DEFAULT_HOP = 512

N_MELS = 128
LOG_MEL_FLOOR = 1e-5


class SignalError(ValueError):
    """Invalid signal or analysis configuration."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio at 44.1 kHz with amplitudes in [-1, 1] (not enforced;
    intermediate signals may exceed the range, file I/O clips)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise SignalError("waveform contains non-finite samples")
        if self.sample_rate != SAMPLE_RATE:
            raise SignalError(
                f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters: power-of-two Hann window, hop dividing the window.

    ``centered`` pads window_size/2 zeros on both ends so frame m is centered
    on sample m*hop (zero padding, not reflection).
    """

    window_size: int = DEFAULT_WINDOW
    hop_size: int = DEFAULT_HOP
    centered: bool = True

    def __post_init__(self):
        w, h = self.window_size, self.hop_size
        if w <= 0 or (w & (w - 1)) != 0:
            raise SignalError(f"window_size must be a power of two, got {w}")
        if h <= 0 or w % h != 0:
            raise SignalError(f"hop_size must divide window_size, got {h} / {w}")

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1

    @property
    def cola(self) -> bool:
        # Hann with hop <= window/2 satisfies constant overlap-add.
        return self.hop_size <= self.window_size // 2


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT coefficients (F x M complex) plus the parameters that made them."""

    bins: np.ndarray
    config: StftConfig
    origin_length: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim != 2 or bins.shape[0] != self.config.n_bins:
            raise SignalError(
                f"expected {self.config.n_bins} frequency rows, got shape {bins.shape}"
            )
        object.__setattr__(self, "bins", bins)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]


def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window (COLA-exact for hop = size/2, size/4, ...)."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(size) / size))


def num_frames(n_samples: int, cfg: StftConfig) -> int:
    """Frame count for a signal of ``n_samples`` under ``cfg``."""
    pad = cfg.window_size // 2 if cfg.centered else 0
    total = n_samples + 2 * pad
    if total < cfg.window_size:
        return 0
    return 1 + (total - cfg.window_size) // cfg.hop_size


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Slice (padded) signal into overlapping frames, shape (M, window)."""
    pad = cfg.window_size // 2 if cfg.centered else 0
    padded = np.pad(x, (pad, pad))
    m = num_frames(len(x), cfg)
    if m <= 0:
        raise SignalError("signal too short for this configuration")
    idx = np.arange(cfg.window_size)[None, :] + cfg.hop_size * np.arange(m)[:, None]
    return padded[idx]


def stft(x: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform with a periodic Hann analysis window.

    Returns an F x M complex matrix, F = window_size/2 + 1. With
    ``cfg.centered`` the signal is zero-padded by window_size/2 on both ends
    so frame m covers samples around m*hop.
    """
    if len(x) == 0:
        raise SignalError("cannot take the STFT of an empty signal")
    frames = frame_signal(x.samples, cfg) * hann_window(cfg.window_size)
    return ComplexSpectrogram(np.fft.rfft(frames, axis=1).T, cfg, len(x))


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Inverse STFT by windowed overlap-add with window-sum normalization.

    Requires a COLA-satisfying configuration (Hann, hop <= window/2). Output
    is trimmed to ``spec.origin_length``.
    """
    cfg = spec.config
    if not cfg.cola:
        raise SignalError(
            f"hop {cfg.hop_size} > window/2 does not satisfy overlap-add"
        )
    window = hann_window(cfg.window_size)
    frames = np.fft.irfft(spec.bins.T, n=cfg.window_size, axis=1) * window

    pad = cfg.window_size // 2 if cfg.centered else 0
    total = spec.origin_length + 2 * pad
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window**2
    for m in range(spec.n_frames):
        start = m * cfg.hop_size
        stop = min(start + cfg.window_size, total)
        out[start:stop] += frames[m, : stop - start]
        norm[start:stop] += wsq[: stop - start]
    good = norm > 1e-10
    out[good] /= norm[good]
    return Waveform(out[pad : pad + spec.origin_length])


def magnitude(spec: ComplexSpectrogram) -> np.ndarray:
    """Element-wise complex modulus, non-negative F x M matrix."""
    return np.abs(spec.bins)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filterbank, n_mels x F non-negative weights."""

    weights: np.ndarray
    f_min: float = 0.0
    f_max: float = SAMPLE_RATE / 2


def mel_filterbank(
    n_mels: int = N_MELS, window_size: int = DEFAULT_WINDOW
) -> MelFilterbank:
    """Build triangular filters on the 2595*log10(1 + f/700) mel scale,
    spanning 0 Hz to Nyquist."""
    f_max = SAMPLE_RATE / 2
    n_bins = window_size // 2 + 1
    bin_freqs = np.arange(n_bins) * SAMPLE_RATE / window_size
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(f_max), n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    weights = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, center, hi = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        weights[i] = np.maximum(0.0, np.minimum(up, down))
    return MelFilterbank(weights, 0.0, f_max)


@lru_cache(maxsize=4)
def _cached_mel_weights(n_mels: int, window_size: int) -> np.ndarray:
    return mel_filterbank(n_mels, window_size).weights


def log_mel(x: Waveform) -> np.ndarray:
    """Log mel spectrogram: 128 bands over power spectra at window 2048,
    hop 512 (86.1 Hz frame rate); natural log with a 1e-5 power floor."""
    spec = stft(x, StftConfig(DEFAULT_WINDOW, DEFAULT_HOP))
    power = np.abs(spec.bins) ** 2
    mel = _cached_mel_weights(N_MELS, DEFAULT_WINDOW) @ power
    return np.log(mel + LOG_MEL_FLOOR)

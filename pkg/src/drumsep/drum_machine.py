"""Forward model: onset/velocity activations trigger one-shot samples.

A stem is the linear convolution of an audio-rate activation impulse train
with a per-class one-shot (decayed by an exponential envelope and scaled by a
track gain); the mixture is the sum of stems. All functions are pure, so the
renderer can run concurrently per track.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .classes import NUM_CLASSES
from .signal import SAMPLE_RATE, Waveform

ONE_SHOT_LENGTH = SAMPLE_RATE  # one second


@dataclass(frozen=True)
class FrameActivations:
    """Frame-rate onsets in [0,1] and velocities in [0,2], both K x M."""

    onsets: np.ndarray
    velocities: np.ndarray
    hop_size: int

    def __post_init__(self):
        o = np.asarray(self.onsets, dtype=np.float64)
        v = np.asarray(self.velocities, dtype=np.float64)
        if o.shape != v.shape or o.ndim != 2:
            raise ValueError(f"onset/velocity shapes differ: {o.shape} vs {v.shape}")
        if o.size and (o.min() < 0 or o.max() > 1):
            raise ValueError("onsets must lie in [0, 1]")
        if v.size and (v.min() < 0 or v.max() > 2):
            raise ValueError("velocities must lie in [0, 2]")
        object.__setattr__(self, "onsets", o)
        object.__setattr__(self, "velocities", v)

    @property
    def num_classes(self) -> int:
        return self.onsets.shape[0]

    @property
    def num_frames(self) -> int:
        return self.onsets.shape[1]


@dataclass(frozen=True)
class OneShotBank:
    """Per-class one-shot waveforms of one drum kit, K x R in [-1, 1]."""

    kit_id: str
    one_shots: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.one_shots, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != NUM_CLASSES:
            raise ValueError(f"expected {NUM_CLASSES} one-shots, got shape {w.shape}")
        if w.shape[1] != ONE_SHOT_LENGTH:
            raise ValueError(
                f"one-shots must be {ONE_SHOT_LENGTH} samples, got {w.shape[1]}"
            )
        if w.size and np.abs(w).max() > 1.0 + 1e-9:
            raise ValueError("one-shot amplitudes must lie in [-1, 1]")
        object.__setattr__(self, "one_shots", w)

    @staticmethod
    def from_waveforms(kit_id: str, waves: list[Waveform]) -> "OneShotBank":
        """Zero-pad (or truncate) each waveform to exactly one second."""
        if len(waves) != NUM_CLASSES:
            raise ValueError(f"expected {NUM_CLASSES} waveforms, got {len(waves)}")
        w = np.zeros((NUM_CLASSES, ONE_SHOT_LENGTH))
        for k, wave in enumerate(waves):
            n = min(len(wave), ONE_SHOT_LENGTH)
            w[k, :n] = wave.samples[:n]
        return OneShotBank(kit_id, w)


def upsample_activations(acts: FrameActivations, n_samples: int) -> np.ndarray:
    """Zero-insertion upsampling of onset*velocity to audio rate, K x T.

    Sample m*hop of class k carries onsets[k,m] * velocities[k,m]; every
    other sample is zero. Frames past n_samples are dropped.
    """
    k, m = acts.onsets.shape
    a = np.zeros((k, n_samples))
    positions = np.arange(m) * acts.hop_size
    keep = positions < n_samples
    a[:, positions[keep]] = (acts.onsets * acts.velocities)[:, keep]
    return a


def envelope(alpha: float, length: int = ONE_SHOT_LENGTH) -> np.ndarray:
    """Exponential decay exp(-20*alpha*t/R): 1 at t=0, non-increasing."""
    if alpha < 0:
        raise ValueError("decay parameter must be non-negative")
    t = np.arange(length)
    return np.exp(-20.0 * alpha * t / length)


def conv_fft_size(n: int, r: int) -> int:
    """FFT length for a full linear convolution of lengths n and r."""
    return int(next_fast_len(n + r - 1, real=True))


def fft_convolve(a: np.ndarray, w: np.ndarray, out_length: int) -> np.ndarray:
    """Linear convolution via frequency-domain multiplication, truncated."""
    size = conv_fft_size(len(a), len(w))
    result = np.fft.irfft(np.fft.rfft(a, size) * np.fft.rfft(w, size), size)
    return result[:out_length]


def sequence(one_shot: np.ndarray, activation: np.ndarray) -> np.ndarray:
    """Trigger a one-shot at every non-zero activation sample.

    Linear convolution of the audio-rate activation row with the one-shot,
    truncated to the activation length (tail past the track end is dropped).
    """
    return fft_convolve(activation, one_shot, len(activation))


def render(
    bank: OneShotBank,
    acts: FrameActivations,
    gains: np.ndarray,
    alphas: np.ndarray,
    n_samples: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Render per-class stems and their mixture.

    stem_k = gains[k] * sequence(one_shot_k * envelope(alphas[k]), a_k);
    the mixture is the exact sample-wise sum of the stems.

    Returns (stems K x T, mixture T).
    """
    gains = np.asarray(gains, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    k = acts.num_classes
    if not (bank.one_shots.shape[0] == len(gains) == len(alphas) == k):
        raise ValueError("class count mismatch between bank, activations and gains")
    if gains.size and (gains.min() < 0 or gains.max() > 2):
        raise ValueError("gains must lie in [0, 2]")

    a = upsample_activations(acts, n_samples)
    stems = np.zeros((k, n_samples))
    for i in range(k):
        shaped = bank.one_shots[i] * envelope(alphas[i])
        stems[i] = gains[i] * sequence(shaped, a[i])
    return stems, stems.sum(axis=0)

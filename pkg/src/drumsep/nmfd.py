"""Transcription-informed convolutive NMF (NMFD) under generalized KL.

The mixture magnitude V (F x M) is approximated by Lambda[f, m] =
sum_k sum_tau W[k, f, tau] * H[k, m - tau]: per-class spectro-temporal
templates convolved with onset-informed activations. Multiplicative updates
keep everything non-negative and do not increase the KL divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .classes import CLASS_INDEX, NUM_CLASSES
from .drum_machine import OneShotBank
from .signal import DEFAULT_HOP, StftConfig, Waveform, magnitude, num_frames, stft
from .transcription import Transcription, nearest_frame

EPSILON = 1e-10


@dataclass(frozen=True)
class NmfdCase:
    """Baseline configuration: iteration budget, template length, init mode."""

    case_id: str
    iterations: int
    template_length: int
    fixed_templates: bool
    informed_templates: bool
    epsilon: float = EPSILON

    @staticmethod
    def preset(case_id: str) -> "NmfdCase":
        presets = {
            "1A": NmfdCase("1A", 50, 40, fixed_templates=True, informed_templates=True),
            "1B": NmfdCase("1B", 20, 10, fixed_templates=False, informed_templates=True),
            "3": NmfdCase("3", 20, 7, fixed_templates=False, informed_templates=False),
        }
        key = case_id.upper().lstrip("0")
        if key not in presets:
            raise ValueError(f"unknown NMFD case {case_id!r}; use 1A, 1B or 3")
        return presets[key]


@dataclass(frozen=True)
class NmfdModel:
    """Templates W (K x F x L), activations H (K x M), both >= 0."""

    templates: np.ndarray
    activations: np.ndarray
    fixed_templates: bool

    def __post_init__(self):
        w = np.asarray(self.templates, dtype=np.float64)
        h = np.asarray(self.activations, dtype=np.float64)
        if w.ndim != 3 or h.ndim != 2 or w.shape[0] != h.shape[0]:
            raise ValueError(
                f"inconsistent template/activation shapes {w.shape} / {h.shape}"
            )
        if (w.size and w.min() < 0) or (h.size and h.min() < 0):
            raise ValueError("NMFD factors must be non-negative")
        object.__setattr__(self, "templates", w)
        object.__setattr__(self, "activations", h)


def _shifted(h: np.ndarray, tau: int) -> np.ndarray:
    """H delayed by tau frames, zero-filled at the start."""
    if tau == 0:
        return h
    out = np.zeros_like(h)
    out[:, tau:] = h[:, :-tau]
    return out


def reconstruct_per_class(model: NmfdModel, n_frames: int) -> np.ndarray:
    """Per-class approximations Lambda_k, shape K x F x M."""
    k, f, length = model.templates.shape
    lam = np.zeros((k, f, n_frames))
    for tau in range(length):
        h = _shifted(model.activations[:, :n_frames], tau)
        lam += model.templates[:, :, tau][:, :, None] * h[:, None, :]
    return lam


def reconstruct(model: NmfdModel, n_frames: int) -> np.ndarray:
    """Full approximation Lambda = sum_k Lambda_k, shape F x M."""
    return reconstruct_per_class(model, n_frames).sum(axis=0)


def kl_divergence(v: np.ndarray, lam: np.ndarray, eps: float = EPSILON) -> float:
    """Generalized KL divergence D(V || Lambda + eps)."""
    lam = lam + eps
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos] / lam[pos])) - v.sum() + lam.sum())


def init_informed(
    v: np.ndarray,
    t: Transcription,
    bank: OneShotBank | None,
    case: NmfdCase,
    seed: int = 0,
    hop_size: int = DEFAULT_HOP,
) -> NmfdModel:
    """Build the onset-informed starting point.

    Activations are 1 at annotated onset frames of each class and epsilon
    elsewhere. Templates are the first L magnitude frames of the class
    one-shot (cases 1A/1B) or uniform random in (0, 1] (case 3).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.min() < 0:
        raise ValueError("mixture magnitude must be a non-negative F x M matrix")
    n_bins, m = v.shape

    h = np.full((NUM_CLASSES, m), case.epsilon)
    for e in t.events:
        frame = nearest_frame(e.time, hop_size)
        if frame >= m:
            raise ValueError(f"onset at {e.time:.6f} s falls beyond {m} frames")
        h[CLASS_INDEX[e.class_name], frame] = 1.0

    if case.informed_templates:
        if bank is None:
            raise ValueError(f"NMFD case {case.case_id} requires a one-shot bank")
        w = _templates_from_bank(bank, n_bins, case)
    else:
        rng = np.random.default_rng(seed)
        w = 1.0 - rng.uniform(0.0, 1.0, size=(NUM_CLASSES, n_bins, case.template_length))
    return NmfdModel(w, h, case.fixed_templates)


def _templates_from_bank(
    bank: OneShotBank, n_bins: int, case: NmfdCase
) -> np.ndarray:
    window = 2 * (n_bins - 1)
    cfg = StftConfig(window_size=window, hop_size=min(DEFAULT_HOP, window // 4))
    w = np.full((NUM_CLASSES, n_bins, case.template_length), case.epsilon)
    for k in range(NUM_CLASSES):
        shot = bank.one_shots[k]
        if np.abs(shot).max() == 0:
            continue
        mag = magnitude(stft(Waveform(shot), cfg))
        frames = min(case.template_length, mag.shape[1])
        w[k, :, :frames] = np.maximum(mag[:, :frames], case.epsilon)
    return w


def nmfd_step(model: NmfdModel, v: np.ndarray, eps: float = EPSILON) -> NmfdModel:
    """One multiplicative KL update of H, then of W (unless templates are
    fixed), with the epsilon floor re-applied after each update."""
    v = np.asarray(v, dtype=np.float64)
    k, n_bins, length = model.templates.shape
    m = v.shape[1]
    if v.shape[0] != n_bins or model.activations.shape[1] != m:
        raise ValueError("model and magnitude dimensions do not match")

    w, h = model.templates, model.activations

    # H update: Lambda is linear in H, so this is a plain majorize-minimize
    # step on an expanded basis.
    q = v / (reconstruct(model, m) + eps)
    num = np.zeros((k, m))
    den = np.zeros((k, m))
    w_sums = w.sum(axis=1)  # K x L
    for tau in range(length):
        valid = m - tau
        num[:, :valid] += np.einsum("kf,fm->km", w[:, :, tau], q[:, tau:])
        den[:, :valid] += w_sums[:, tau : tau + 1]
    h = np.maximum(h * num / np.maximum(den, eps), eps)
    model = NmfdModel(w, h, model.fixed_templates)

    if not model.fixed_templates:
        q = v / (reconstruct(model, m) + eps)
        w_new = np.empty_like(w)
        for tau in range(length):
            h_tau = _shifted(h, tau)  # K x M
            num_w = np.einsum("fm,km->kf", q, h_tau)
            den_w = h_tau.sum(axis=1)[:, None]
            w_new[:, :, tau] = w[:, :, tau] * num_w / np.maximum(den_w, eps)
        w = np.maximum(w_new, eps)
        model = NmfdModel(w, h, model.fixed_templates)
    return model


def nmfd_run(
    v: np.ndarray,
    t: Transcription,
    bank: OneShotBank | None,
    case: NmfdCase,
    seed: int = 0,
    hop_size: int = DEFAULT_HOP,
) -> tuple[NmfdModel, np.ndarray]:
    """Initialize and iterate; returns the model and per-class magnitudes
    (K x F x M), which sum exactly to the full reconstruction."""
    model = init_informed(v, t, bank, case, seed=seed, hop_size=hop_size)
    for _ in range(case.iterations):
        model = nmfd_step(model, v, eps=case.epsilon)
    return model, reconstruct_per_class(model, v.shape[1])

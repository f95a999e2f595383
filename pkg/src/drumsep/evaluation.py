"""Separation and transcription metrics with grouping and aggregation.

nSDR is reported for masked estimates only; LSD and PES apply to both
masked and synthesized outputs. Apart from PES, metrics are restricted to
active stems (at least one onset in the track). Overall aggregates pool
per-track, per-class scores flattened, independent of class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classes import CLASS_NAMES, FIVE_CLASS_GROUPS, FIVE_CLASS_NAMES
from .signal import DEFAULT_HOP, DEFAULT_WINDOW, StftConfig, Waveform, stft
from .transcription import ONSET_TOLERANCE_SEC, Transcription, match_onsets

METRIC_EPSILON = 1e-8
PES_FRAME = 512
PES_FLOOR_DB = -60.0


def _check_lengths(s: Waveform, s_hat: Waveform):
    if len(s) != len(s_hat):
        raise ValueError(f"length mismatch: {len(s)} vs {len(s_hat)}")


def nsdr(s: Waveform, s_hat: Waveform) -> float:
    """10*log10(||s||^2 / (||s - s_hat||^2 + eps) + eps), eps = 1e-8."""
    _check_lengths(s, s_hat)
    signal = float(np.sum(s.samples**2))
    noise = float(np.sum((s.samples - s_hat.samples) ** 2))
    return float(10.0 * np.log10(signal / (noise + METRIC_EPSILON) + METRIC_EPSILON))


def lsd(s: Waveform, s_hat: Waveform) -> float:
    """Log-spectral distance: per-frame RMS over frequency of the log power
    ratio (natural log, eps = 1e-8), averaged over frames. Window 2048,
    hop 512."""
    _check_lengths(s, s_hat)
    cfg = StftConfig(DEFAULT_WINDOW, DEFAULT_HOP)
    p_ref = np.abs(stft(s, cfg).bins) ** 2
    p_est = np.abs(stft(s_hat, cfg).bins) ** 2
    ratio = np.log((p_est + METRIC_EPSILON) / (p_ref + METRIC_EPSILON))
    per_frame = np.sqrt(np.mean(ratio**2, axis=0))
    return float(per_frame.mean())


def pes(reference: Waveform, estimate: Waveform) -> float | None:
    """Predicted energy at silence, in dB.

    Both signals are cut into non-overlapping 512-sample frames; frames whose
    reference energy is at most -60 dB count as silent. The estimate's
    per-frame energy 10*log10(sum x^2 + 1e-8) is clipped below at -60 dB and
    averaged over the silent frames. Returns None when no frame is silent.
    """
    _check_lengths(reference, estimate)
    n_frames = len(reference) // PES_FRAME
    if n_frames == 0:
        return None
    ref = reference.samples[: n_frames * PES_FRAME].reshape(n_frames, PES_FRAME)
    est = estimate.samples[: n_frames * PES_FRAME].reshape(n_frames, PES_FRAME)
    ref_db = 10.0 * np.log10(np.sum(ref**2, axis=1) + METRIC_EPSILON)
    silent = ref_db <= PES_FLOOR_DB
    if not silent.any():
        return None
    est_db = 10.0 * np.log10(np.sum(est[silent] ** 2, axis=1) + METRIC_EPSILON)
    return float(np.maximum(est_db, PES_FLOOR_DB).mean())


@dataclass(frozen=True)
class MetricsRow:
    """Metrics of one (track, class) pair; None marks inapplicable values."""

    track_id: str
    class_name: str
    active: bool
    nsdr: float | None
    lsd: float | None
    pes: float | None
    precision: float | None
    recall: float | None


def group_stems(
    stems: dict[str, Waveform], grouping: int
) -> dict[str, Waveform]:
    """Return stems under the requested grouping (9 passes through; 5 sums
    member classes per Table-style mapping)."""
    if grouping == 9:
        return dict(stems)
    if grouping != 5:
        raise ValueError("grouping must be 9 or 5")
    grouped: dict[str, np.ndarray] = {}
    for name, wave in stems.items():
        g = FIVE_CLASS_GROUPS[name]
        if g in grouped:
            grouped[g] = grouped[g] + wave.samples
        else:
            grouped[g] = wave.samples.copy()
    return {g: Waveform(v) for g, v in grouped.items()}


def _grouped_classes(grouping: int) -> tuple[str, ...]:
    return CLASS_NAMES if grouping == 9 else FIVE_CLASS_NAMES


def _active_groups(t: Transcription, grouping: int) -> set[str]:
    active = t.active_classes()
    if grouping == 9:
        return active
    return {FIVE_CLASS_GROUPS[c] for c in active}


def evaluate_track(
    track_id: str,
    refs: dict[str, Waveform],
    ests: dict[str, Waveform],
    t: Transcription,
    grouping: int = 9,
    estimate_kind: str = "masked",
    est_transcription: Transcription | None = None,
    tolerance: float = ONSET_TOLERANCE_SEC,
) -> list[MetricsRow]:
    """Per-class metric rows for one track.

    ``refs``/``ests`` map 9-class names to stems of equal length. nSDR is
    emitted only for ``estimate_kind="masked"``; PES is computed for every
    class, the rest only for active ones. Onset precision/recall is filled
    when an estimated transcription is supplied.
    """
    if set(refs) != set(ests):
        raise ValueError(
            f"reference and estimate class sets differ: {sorted(refs)} vs "
            f"{sorted(ests)}"
        )
    if estimate_kind not in ("masked", "synthesis"):
        raise ValueError(f"unknown estimate kind {estimate_kind!r}")

    refs_g = group_stems(refs, grouping)
    ests_g = group_stems(ests, grouping)
    active = _active_groups(t, grouping)

    rows = []
    for name in _grouped_classes(grouping):
        if name not in refs_g:
            continue
        ref, est = refs_g[name], ests_g[name]
        is_active = name in active
        row_nsdr = row_lsd = prec = rec = None
        if is_active:
            if estimate_kind == "masked":
                row_nsdr = nsdr(ref, est)
            row_lsd = lsd(ref, est)
            if est_transcription is not None:
                prec, rec, _ = match_onsets(
                    _group_times(est_transcription, name, grouping),
                    _group_times(t, name, grouping),
                    tolerance,
                )
        rows.append(
            MetricsRow(
                track_id=track_id,
                class_name=name,
                active=is_active,
                nsdr=row_nsdr,
                lsd=row_lsd,
                pes=pes(ref, est),
                precision=prec,
                recall=rec,
            )
        )
    return rows


def _group_times(t: Transcription, name: str, grouping: int) -> np.ndarray:
    if grouping == 9:
        return t.times_for(name)
    members = [c for c, g in FIVE_CLASS_GROUPS.items() if g == name]
    times = np.concatenate([t.times_for(c) for c in members])
    return np.sort(times)


METRIC_FIELDS = ("nsdr", "lsd", "pes", "precision", "recall")


def _stats(values: list[float]) -> dict[str, float | int]:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "median": float(np.percentile(arr, 50)),
        "q25": float(np.percentile(arr, 25)),
        "q75": float(np.percentile(arr, 75)),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "count": int(arr.size),
    }


def aggregate(rows: list[MetricsRow]) -> dict:
    """Per-class and overall summary statistics (linear-interpolation
    quantiles). None values are excluded and shrink the counts; classes with
    no valid values for a metric omit that metric."""
    if not rows:
        raise ValueError("no metric rows to aggregate")
    classes = sorted({r.class_name for r in rows})
    summary: dict = {"per_class": {}, "overall": {}}
    for name in classes:
        entry = {}
        for metric in METRIC_FIELDS:
            values = [
                getattr(r, metric)
                for r in rows
                if r.class_name == name and getattr(r, metric) is not None
            ]
            if values:
                entry[metric] = _stats(values)
        summary["per_class"][name] = entry
    for metric in METRIC_FIELDS:
        values = [getattr(r, metric) for r in rows if getattr(r, metric) is not None]
        if values:
            summary["overall"][metric] = _stats(values)
    return summary

"""Command-line pipelines: render, generate, separate, detect-onsets,
evaluate. Every command is deterministic given (inputs, config, seed) and
exits non-zero with a one-line reason on error."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import abs_solver, dataset, evaluation, fileio, masking, nmfd
from .classes import CLASS_NAMES, NUM_CLASSES
from .drum_machine import render as render_stems
from .signal import SAMPLE_RATE, StftConfig, Waveform, magnitude, num_frames, stft
from .transcription import (
    PeakPickConfig,
    Transcription,
    events_to_grid,
    peak_pick,
    spectral_flux_curve,
)


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _guarded(func):
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (fileio.FileFormatError, ValueError, OSError) as exc:
            _fail(str(exc))

    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


def _load_config(path: str | None) -> fileio.RunConfig:
    return fileio.read_config(path) if path else fileio.default_config()


def _write_stem_dir(out: Path, stems: np.ndarray):
    for k, name in enumerate(CLASS_NAMES):
        fileio.write_wav(out / f"{name}.wav", Waveform(stems[k]))


def _echo_config(out: Path, values: dict):
    lines = [f"{key} = {values[key]}" for key in sorted(values)]
    fileio._atomic_write_text(out / "config.txt", "\n".join(lines) + "\n")


@click.group()
def main():
    """Drum source separation toolkit."""


@main.command("render")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--transcription", "transcription_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--duration", type=float, default=None, help="Track length in seconds.")
@click.option("--seed", type=int, default=0)
@_guarded
def render_cmd(bank_dir, transcription_path, out_dir, duration, seed):
    """Render per-class stems and the mixture for a transcription."""
    bank = fileio.read_bank(bank_dir)
    t = fileio.read_transcription(transcription_path)
    if duration is None:
        last = max((e.time for e in t.events), default=0.0)
        duration = last + 1.0
    n_samples = int(round(duration * SAMPLE_RATE))
    hop = fileio.CONFIG_DEFAULTS["stft.hop"]
    grid = events_to_grid(t, max(1, n_samples // hop), hop)
    stems, mixture = render_stems(
        bank, grid, np.ones(NUM_CLASSES), np.zeros(NUM_CLASSES), n_samples
    )
    out = Path(out_dir)
    _write_stem_dir(out, stems)
    fileio.write_wav(out / "mixture.wav", Waveform(mixture))
    _echo_config(out, {"bank": bank.kit_id, "duration": duration, "seed": seed})


@main.command("generate")
@click.option("--banks", "bank_dirs", required=True, multiple=True,
              type=click.Path(exists=True))
@click.option("--tracks", "n_tracks", required=True, type=int)
@click.option("--seed", type=int, default=0)
@click.option("--duration", type=float, default=6.0)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_guarded
def generate_cmd(bank_dirs, n_tracks, seed, duration, out_dir):
    """Generate a synthetic dataset with stems and annotations."""
    banks = [fileio.read_bank(d) for d in bank_dirs]
    spec = dataset.GenerationSpec(n_tracks=n_tracks, duration=duration)
    tracks = dataset.generate_dataset(banks, seed, spec)
    out = Path(out_dir)
    for track in tracks:
        track_dir = out / track.track_id
        fileio.write_wav(track_dir / "mixture.wav", track.mixture)
        _write_stem_dir(track_dir / "stems", track.stems)
        fileio.write_transcription(track.transcription, track_dir / "transcription.csv")
    _echo_config(out, {"tracks": n_tracks, "seed": seed, "duration": duration,
                       "banks": ",".join(b.kit_id for b in banks)})


@main.group("separate")
def separate_cmd():
    """Invert a mixture into per-class stems."""


@separate_cmd.command("nmfd")
@click.option("--case", "case_id", required=True,
              type=click.Choice(["1a", "1b", "3"], case_sensitive=False))
@click.option("--mixture", "mixture_path", required=True, type=click.Path(exists=True))
@click.option("--transcription", "transcription_path", required=True,
              type=click.Path(exists=True))
@click.option("--bank", "bank_dir", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@_guarded
def separate_nmfd(case_id, mixture_path, transcription_path, bank_dir, out_dir,
                  seed, config_path):
    """Transcription-informed NMFD followed by Wiener masking."""
    config = _load_config(config_path)
    case = nmfd.NmfdCase.preset(case_id)
    if case.informed_templates and bank_dir is None:
        raise click.UsageError(f"NMFD case {case.case_id} requires --bank")
    x = fileio.read_wav(mixture_path)
    t = fileio.read_transcription(transcription_path)
    bank = fileio.read_bank(bank_dir) if bank_dir else None
    cfg = StftConfig(int(config["stft.window"]), int(config["stft.hop"]))

    spec = stft(x, cfg)
    v = magnitude(spec)
    _, per_class = nmfd.nmfd_run(v, t, bank, case, seed=seed, hop_size=cfg.hop_size)
    mask_set = masking.compute_masks(
        per_class, float(config["masking.alpha"]), float(config["masking.epsilon"])
    )
    stems = masking.apply_masks(x, mask_set, cfg)
    out = Path(out_dir)
    _write_stem_dir(out / "masked", stems)
    np.savez_compressed(out / "magnitudes.npz",
                        **{name: per_class[k] for k, name in enumerate(CLASS_NAMES)})
    _echo_config(out, dict(config.values) | {"nmfd.case": case.case_id, "seed": seed})


@separate_cmd.command("abs")
@click.option("--mixture", "mixture_path", required=True, type=click.Path(exists=True))
@click.option("--transcription", "transcription_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@_guarded
def separate_abs(mixture_path, transcription_path, out_dir, steps, seed, config_path):
    """Analysis-by-synthesis separation, then Wiener masking of the mixture."""
    config = _load_config(config_path)
    x = fileio.read_wav(mixture_path)
    t = fileio.read_transcription(transcription_path)
    opt = abs_solver.OptimizerConfig(
        learning_rate=float(config["solver.lr"]),
        grad_clip_norm=float(config["solver.clip"]),
        steps=steps if steps is not None else int(config["solver.steps"]),
        seed=seed if seed is not None else int(config["seed"]),
    )
    loss_cfg = abs_solver.LossConfig(scales=config.loss_scales)
    result = abs_solver.solve_track(x, t, opt, loss_cfg)

    cfg = StftConfig(int(config["stft.window"]), int(config["stft.hop"]))
    estimates = np.stack(
        [magnitude(stft(Waveform(s), cfg)) if np.any(s) else
         np.zeros((cfg.n_bins, num_frames(len(x), cfg)))
         for s in result.stems]
    )
    mask_set = masking.compute_masks(
        estimates, float(config["masking.alpha"]), float(config["masking.epsilon"])
    )
    masked = masking.apply_masks(x, mask_set, cfg)

    out = Path(out_dir)
    _write_stem_dir(out / "synth", result.stems)
    _write_stem_dir(out / "masked", masked)
    fileio.write_wav(out / "reconstruction.wav", Waveform(result.mixture))
    fileio.write_loss_trace(result.loss_trace, out / "loss_trace.csv")
    _echo_config(out, dict(config.values) | {"solver.steps": opt.steps,
                                             "seed": opt.seed})


@main.command("detect-onsets")
@click.option("--mixture", "mixture_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_guarded
def detect_onsets_cmd(mixture_path, out_path):
    """Class-agnostic onsets from spectral flux and peak picking."""
    x = fileio.read_wav(mixture_path)
    curve = spectral_flux_curve(x)
    frames = peak_pick(curve, PeakPickConfig())
    hop = fileio.CONFIG_DEFAULTS["stft.hop"]
    lines = [",".join(fileio.TRANSCRIPTION_HEADER)]
    for m in frames:
        time = m * hop / SAMPLE_RATE
        lines.append(f"{time:.6f},unknown,{min(1.0, curve[m]):.6f}")
    fileio._atomic_write_text(Path(out_path), "\n".join(lines) + "\n")


@main.command("evaluate")
@click.option("--refs", "refs_dir", required=True, type=click.Path(exists=True))
@click.option("--ests", "ests_dir", required=True, type=click.Path(exists=True))
@click.option("--transcription", "transcription_path", default=None,
              type=click.Path(exists=True))
@click.option("--grouping", type=click.Choice(["9", "5"]), default="9")
@click.option("--kind", type=click.Choice(["masked", "synthesis"]), default="masked")
@click.option("--out", "out_path", required=True, type=click.Path())
@_guarded
def evaluate_cmd(refs_dir, ests_dir, transcription_path, grouping, kind, out_path):
    """Score estimated stems against references; writes a JSON report.

    The directories either contain `<class>.wav` stems for one track, or one
    subdirectory per track (each reference subdirectory then needs its own
    transcription.csv next to a stems/ folder, as written by `generate`).
    """
    refs, ests = Path(refs_dir), Path(ests_dir)
    grouping = int(grouping)
    rows = []
    if (refs / f"{CLASS_NAMES[0]}.wav").exists():
        if transcription_path is None:
            raise click.UsageError("single-track evaluation requires --transcription")
        t = fileio.read_transcription(transcription_path)
        rows += evaluation.evaluate_track(
            refs.name, _read_stems(refs), _read_stems(ests), t,
            grouping=grouping, estimate_kind=kind,
        )
    else:
        track_dirs = sorted(d for d in refs.iterdir() if d.is_dir())
        if not track_dirs:
            raise fileio.FileFormatError(f"{refs}: no stems or track directories")
        for track_dir in track_dirs:
            est_dir = ests / track_dir.name
            if not est_dir.exists():
                raise fileio.FileFormatError(
                    f"{ests}: missing estimates for track {track_dir.name}"
                )
            t = fileio.read_transcription(track_dir / "transcription.csv")
            ref_stems = _read_stems(track_dir / "stems")
            est_stems = _read_stems(
                est_dir / "stems" if (est_dir / "stems").is_dir() else est_dir
            )
            rows += evaluation.evaluate_track(
                track_dir.name, ref_stems, est_stems, t,
                grouping=grouping, estimate_kind=kind,
            )
    report = {
        "tracks": [
            {
                "track": r.track_id, "class": r.class_name, "active": r.active,
                "nsdr": r.nsdr, "lsd": r.lsd, "pes": r.pes,
                "precision": r.precision, "recall": r.recall,
            }
            for r in rows
        ],
        "aggregates": evaluation.aggregate(rows),
    }
    fileio.write_report(report, out_path)


def _read_stems(directory: Path) -> dict[str, Waveform]:
    stems = {}
    for name in CLASS_NAMES:
        path = directory / f"{name}.wav"
        if not path.exists():
            raise fileio.FileFormatError(f"{directory}: missing stem {name}.wav")
        stems[name] = fileio.read_wav(path)
    return stems


if __name__ == "__main__":
    main()

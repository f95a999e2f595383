"""Synthetic dataset sampler: determinism, coherence and onset statistics."""

import numpy as np
import pytest

from drumsep.classes import CLASS_INDEX, CLASS_NAMES, NUM_CLASSES
from drumsep.dataset import DEFAULT_DENSITIES, GenerationSpec, generate_dataset
from drumsep.drum_machine import ONE_SHOT_LENGTH, OneShotBank


def small_bank(seed=0):
    rng = np.random.default_rng(seed)
    shots = np.zeros((NUM_CLASSES, ONE_SHOT_LENGTH))
    t = np.arange(2000)
    for k in range(NUM_CLASSES):
        shots[k, :2000] = rng.uniform(-1, 1, 2000) * np.exp(-t / 400)
    return OneShotBank(f"kit_{seed}", shots)


class TestGenerate:
    def test_deterministic_in_seed(self):
        spec = GenerationSpec(n_tracks=3, duration=1.0)
        a = generate_dataset([small_bank()], 5, spec)
        b = generate_dataset([small_bank()], 5, spec)
        for ta, tb in zip(a, b):
            np.testing.assert_array_equal(ta.mixture.samples, tb.mixture.samples)
            assert ta.transcription == tb.transcription

    def test_different_seeds_differ(self):
        spec = GenerationSpec(n_tracks=1, duration=1.0)
        a = generate_dataset([small_bank()], 1, spec)[0]
        b = generate_dataset([small_bank()], 2, spec)[0]
        assert not np.array_equal(a.mixture.samples, b.mixture.samples)

    def test_stems_sum_to_mixture(self):
        spec = GenerationSpec(n_tracks=2, duration=1.5)
        for track in generate_dataset([small_bank()], 0, spec):
            np.testing.assert_allclose(
                track.stems.sum(axis=0), track.mixture.samples, atol=1e-12
            )

    def test_zero_density_class_is_silent(self):
        densities = dict(DEFAULT_DENSITIES)
        densities["kick"] = 0.0
        spec = GenerationSpec(n_tracks=3, duration=2.0, densities=densities)
        for track in generate_dataset([small_bank()], 3, spec):
            assert "kick" not in track.transcription.active_classes()
            assert np.all(track.stems[CLASS_INDEX["kick"]] == 0)

    def test_mixture_peak_within_unit_range(self):
        spec = GenerationSpec(n_tracks=4, duration=1.0)
        for track in generate_dataset([small_bank()], 11, spec):
            assert np.abs(track.mixture.samples).max() <= 1.0 + 1e-12

    def test_same_class_onsets_respect_min_gap(self):
        spec = GenerationSpec(n_tracks=3, duration=3.0)
        hop_sec = spec.hop_size / 44100
        for track in generate_dataset([small_bank()], 21, spec):
            for name in CLASS_NAMES:
                times = track.transcription.times_for(name)
                if len(times) > 1:
                    assert np.diff(times).min() > spec.min_gap_hops * hop_sec

    def test_empty_bank_list_rejected(self):
        with pytest.raises(ValueError):
            generate_dataset([], 0)

    def test_onset_counts_match_poisson_mean(self):
        spec = GenerationSpec(n_tracks=100, duration=1.0, gain_probability=0.0)
        tracks = generate_dataset([small_bank()], 17, spec)
        total = sum(len(t.transcription) for t in tracks)
        mean = sum(DEFAULT_DENSITIES.values()) * spec.duration * spec.n_tracks
        assert abs(total - mean) < 3 * np.sqrt(mean)

    def test_velocities_within_configured_range(self):
        spec = GenerationSpec(n_tracks=3, duration=2.0)
        lo, hi = spec.velocity_range
        for track in generate_dataset([small_bank()], 8, spec):
            for e in track.transcription.events:
                assert lo <= e.velocity <= hi

    def test_multiple_banks_all_used(self):
        banks = [small_bank(0), small_bank(1)]
        spec = GenerationSpec(n_tracks=12, duration=0.5)
        kits = {t.kit_id for t in generate_dataset(banks, 2, spec)}
        assert kits == {"kit_0", "kit_1"}

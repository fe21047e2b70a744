"""Shared fixtures: synthetic signals and a throwaway stem corpus."""

import numpy as np
import pytest

from sepeval import AudioSignal, STEM_NAMES, save_wav

FIXTURE_RATE = 8000


def random_signal(rng, num_samples=FIXTURE_RATE, channels=2, scale=0.1,
                  rate=FIXTURE_RATE):
    return AudioSignal(rng.standard_normal((num_samples, channels)) * scale, rate)


def dyadic(samples, steps=1024):
    """Quantize to multiples of 1/steps so float32 WAV writes are exact."""
    return np.round(np.asarray(samples) * steps) / steps


def write_track(folder, rng, num_samples=2 * FIXTURE_RATE, rate=FIXTURE_RATE,
                scale=0.05):
    """Create one track folder whose mixture is exactly the stem sum."""
    folder.mkdir(parents=True, exist_ok=True)
    stems = {}
    for name in STEM_NAMES:
        samples = dyadic(rng.standard_normal((num_samples, 2)) * scale)
        stems[name] = samples
        save_wav(folder / f"{name}.wav", AudioSignal(samples, rate))
    mixture = sum(stems.values())
    save_wav(folder / "mixture.wav", AudioSignal(mixture, rate))
    return stems, mixture


@pytest.fixture
def corpus_root(tmp_path):
    """Two-track corpus: one train track, one test track."""
    rng = np.random.default_rng(2024)
    write_track(tmp_path / "train" / "Alpha - One", rng)
    write_track(tmp_path / "test" / "Beta - Two", rng)
    return tmp_path

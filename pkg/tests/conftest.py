import numpy as np
import pytest

from spatial_se.stft import Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def modulated_noise(rng, seconds: float, fs: int = 16000) -> np.ndarray:
    """Speech-like stand-in: white noise under a slow syllabic envelope."""
    n = int(seconds * fs)
    t = np.arange(n) / fs
    env = 0.5 * (1.0 + np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi)))
    return 0.1 * env * rng.standard_normal(n)


def mono(x, fs: int = 16000) -> Waveform:
    return Waveform.from_mono(x, fs)

import numpy as np
import pytest

from sepeval.audio import AudioBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_noise(seconds: float, sample_rate: int = 44100, amplitude: float = 0.25,
               seed: int = 0) -> AudioBuffer:
    gen = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    return AudioBuffer(amplitude * gen.standard_normal(n), sample_rate)


def make_tone(freq_hz: float, seconds: float, sample_rate: int = 44100,
              amplitude: float = 1.0) -> AudioBuffer:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq_hz * t), sample_rate)

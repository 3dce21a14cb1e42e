"""Deterministic stub encoder: 64-band log-mel frames.

Fixed recipe (also in the README, so an independent implementation can
reproduce it bit-for-bit modulo float noise):

* mono input at its native sample rate, window 25 ms, hop 10 ms
  (both rounded to samples), periodic Hann window
* FFT size = smallest power of two >= window length
* power spectrum |rfft|^2 at bin centers k * sr / nfft
* 64 triangular filters with peak value 1.0, edges equally spaced on the
  HTK mel scale mel(f) = 2595 * log10(1 + f / 700) between 0 Hz and sr/2
* output = natural log of (filter energy + 1e-10), float32

No RNG, no timestamps: output depends only on the audio samples.
"""

import numpy as np

N_BANDS = 64
WINDOW_SECONDS = 0.025
HOP_SECONDS = 0.010
LOG_FLOOR = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, nfft: int, n_bands: int = N_BANDS):
    """(n_bands, nfft//2 + 1) triangular weights, peak 1.0 per band."""
    edges_hz = mel_to_hz(
        np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_bands + 2)
    )
    bin_freqs = np.arange(nfft // 2 + 1) * (sample_rate / nfft)
    bank = np.zeros((n_bands, bin_freqs.size))
    for band in range(n_bands):
        lo, center, hi = edges_hz[band : band + 3]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        bank[band] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def log_mel_frames(samples: np.ndarray, sample_rate: int) -> np.ndarray:
    """T x 64 float32 log-mel matrix; zero-pads input shorter than one window."""
    window = int(round(WINDOW_SECONDS * sample_rate))
    hop = int(round(HOP_SECONDS * sample_rate))
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < window:
        samples = np.pad(samples, (0, window - samples.size))
    nfft = 1
    while nfft < window:
        nfft *= 2
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window) / window)
    n_frames = 1 + (samples.size - window) // hop
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    spectra = np.fft.rfft(samples[idx] * hann, n=nfft, axis=1)
    power = np.abs(spectra) ** 2
    bank = mel_filterbank(sample_rate, nfft)
    return np.log(power @ bank.T + LOG_FLOOR).astype(np.float32)


def frame_rate(sample_rate: int) -> float:
    return sample_rate / int(round(HOP_SECONDS * sample_rate))

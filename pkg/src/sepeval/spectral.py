"""A-weighted multi-resolution STFT loss.

Each resolution contributes a spectral-convergence term (Frobenius distance
of magnitudes over the target's Frobenius norm) plus an L1 log-magnitude
term; the per-resolution sums are averaged over all resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, Spectrogram, StftConfig, a_weighting_gains, stft
from .errors import BufferTooShort, GeometryMismatch, LengthMismatch, ZeroTarget

DEFAULT_FFT_SIZES = (256, 512, 1024, 2048, 4096)


@dataclass(frozen=True)
class MrStftConfig:
    """Resolutions and conventions for :func:`mr_stft_loss`.

    ``logmag_normalization`` selects the divisor of the log-magnitude L1
    term: ``"frames"`` divides by the frame count only (the documented
    convention), ``"elements"`` divides by frames*bins (the convention of
    common loss toolboxes).
    """

    fft_sizes: tuple[int, ...] = DEFAULT_FFT_SIZES
    overlap: float = 0.75
    a_weighting: bool = True
    magnitude_floor: float = 1e-8
    logmag_normalization: str = "frames"
    center_padding: bool = True

    def __post_init__(self):
        if not self.fft_sizes:
            raise ValueError("fft_sizes must be non-empty")
        if any(n < 2 for n in self.fft_sizes):
            raise ValueError("every fft_size must be >= 2")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.magnitude_floor <= 0:
            raise ValueError("magnitude_floor must be positive")
        if self.logmag_normalization not in ("frames", "elements"):
            raise ValueError(
                f"unknown logmag_normalization {self.logmag_normalization!r}"
            )

    def hop_for(self, fft_size: int) -> int:
        return max(1, int(round(fft_size * (1.0 - self.overlap))))


@dataclass(frozen=True)
class ResolutionLoss:
    fft_size: int
    sc_term: float
    logmag_term: float


@dataclass(frozen=True)
class LossBreakdown:
    """Per-resolution terms and their mean."""

    per_resolution: tuple[ResolutionLoss, ...]
    total: float


def stft_loss_single(
    estimate: Spectrogram,
    target: Spectrogram,
    floor: float = 1e-8,
    weights: np.ndarray | None = None,
    logmag_normalization: str = "frames",
) -> tuple[float, float]:
    """Spectral-convergence and log-magnitude terms for one resolution.

    Magnitudes are multiplied per-bin by ``weights`` (when given) and then
    floored at ``floor``; the natural logarithm is used. The target's norm
    sits in the spectral-convergence denominator, so argument order matters.
    """
    if estimate.bins.shape != target.bins.shape:
        raise GeometryMismatch(
            f"estimate {estimate.bins.shape} vs target {target.bins.shape}"
        )
    target_mag = target.magnitudes()
    if not np.any(target_mag):
        raise ZeroTarget("target spectrogram is identically zero")
    est_mag = estimate.magnitudes()
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (target.bin_count,):
            raise GeometryMismatch(
                f"weights length {weights.shape} does not match {target.bin_count} bins"
            )
        target_mag = target_mag * weights
        est_mag = est_mag * weights
    target_mag = np.maximum(target_mag, floor)
    est_mag = np.maximum(est_mag, floor)

    diff = target_mag - est_mag
    sc_term = float(np.linalg.norm(diff) / np.linalg.norm(target_mag))
    log_l1 = float(np.sum(np.abs(np.log(target_mag) - np.log(est_mag))))
    frames = target.frame_count
    if logmag_normalization == "elements":
        logmag_term = log_l1 / (frames * target.bin_count)
    else:
        logmag_term = log_l1 / frames
    return sc_term, logmag_term


def mr_stft_loss(
    estimate: AudioBuffer,
    target: AudioBuffer,
    config: MrStftConfig = MrStftConfig(),
) -> LossBreakdown:
    """Multi-resolution STFT loss between estimate and target signals."""
    if len(estimate) != len(target):
        raise LengthMismatch(
            f"estimate has {len(estimate)} samples, target {len(target)}"
        )
    if len(target) < max(config.fft_sizes):
        raise BufferTooShort(
            f"signals must span the largest resolution ({max(config.fft_sizes)} samples)"
        )
    per_resolution = []
    for fft_size in config.fft_sizes:
        stft_config = StftConfig(
            fft_size=fft_size,
            hop_size=config.hop_for(fft_size),
            center_padding=config.center_padding,
        )
        weights = (
            a_weighting_gains(stft_config, target.sample_rate)
            if config.a_weighting
            else None
        )
        sc, logmag = stft_loss_single(
            stft(estimate, stft_config),
            stft(target, stft_config),
            floor=config.magnitude_floor,
            weights=weights,
            logmag_normalization=config.logmag_normalization,
        )
        per_resolution.append(ResolutionLoss(fft_size, sc, logmag))
    total = float(np.mean([r.sc_term + r.logmag_term for r in per_resolution]))
    return LossBreakdown(per_resolution=tuple(per_resolution), total=total)

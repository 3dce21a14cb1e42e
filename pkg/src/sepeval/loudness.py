"""Integrated loudness (ITU-R BS.1770-4) and gain normalization.

The K-weighting prefilter is a high-shelf followed by a high-pass biquad.
The standard tabulates coefficients for 48 kHz only; here both stages are
re-derived for the buffer's sample rate from analog prototype parameters
(corner frequency, Q, shelf gain) that reproduce the published 48 kHz
coefficients through the bilinear transform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer
from .errors import AllBlocksGated, TooShort

log = logging.getLogger(__name__)

#: Distinguished integrated_lufs value for "everything fell below the gate".
BELOW_GATE = float("-inf")

_BLOCK_SECONDS = 0.400
_BLOCK_OVERLAP = 0.75
_ABSOLUTE_GATE_LUFS = -70.0
_RELATIVE_GATE_LU = -10.0
_OFFSET_LUFS = -0.691

# Analog prototype of the K-weighting stages (de-embedded from the 48 kHz
# reference coefficients; shelf gain in dB). The band-gain exponent places
# the shelf's midpoint gain; together these reproduce the published 48 kHz
# coefficients to ~1e-10.
_SHELF_FC = 1681.974450955533
_SHELF_GAIN_DB = 3.999843853973347
_SHELF_Q = 0.7071752369554196
_SHELF_BAND_EXPONENT = 0.4996667741545416
_HIGHPASS_FC = 38.13547087602444
_HIGHPASS_Q = 0.5003270373238773


@dataclass(frozen=True)
class LoudnessResult:
    """Integrated loudness of one buffer, plus normalization bookkeeping."""

    integrated_lufs: float
    gated_block_count: int
    applied_gain_db: float = 0.0

    @property
    def below_gate(self) -> bool:
        return self.integrated_lufs == BELOW_GATE


def k_weighting_coefficients(sample_rate: int):
    """Biquad coefficient pairs ``((b_shelf, a_shelf), (b_hp, a_hp))``."""
    k = np.tan(np.pi * _SHELF_FC / sample_rate)
    vh = 10.0 ** (_SHELF_GAIN_DB / 20.0)
    vb = vh**_SHELF_BAND_EXPONENT
    a0 = 1.0 + k / _SHELF_Q + k * k
    b_shelf = np.array([
        (vh + vb * k / _SHELF_Q + k * k) / a0,
        2.0 * (k * k - vh) / a0,
        (vh - vb * k / _SHELF_Q + k * k) / a0,
    ])
    a_shelf = np.array([
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / _SHELF_Q + k * k) / a0,
    ])

    k = np.tan(np.pi * _HIGHPASS_FC / sample_rate)
    a0 = 1.0 + k / _HIGHPASS_Q + k * k
    # The standard keeps the high-pass numerator at [1, -2, 1] unnormalized.
    b_hp = np.array([1.0, -2.0, 1.0])
    a_hp = np.array([
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / _HIGHPASS_Q + k * k) / a0,
    ])
    return (b_shelf, a_shelf), (b_hp, a_hp)


def _gating_block_powers(buffer: AudioBuffer) -> np.ndarray:
    """Mean-square power of the K-weighted signal per 400 ms block (75% overlap)."""
    (b1, a1), (b2, a2) = k_weighting_coefficients(buffer.sample_rate)
    weighted = lfilter(b2, a2, lfilter(b1, a1, buffer.samples))
    block = int(round(_BLOCK_SECONDS * buffer.sample_rate))
    step = int(round(_BLOCK_SECONDS * (1.0 - _BLOCK_OVERLAP) * buffer.sample_rate))
    if len(weighted) < block:
        raise TooShort(
            f"need at least {_BLOCK_SECONDS} s of audio, got {buffer.duration_seconds:.3f} s"
        )
    n_blocks = 1 + (len(weighted) - block) // step
    # Cumulative sum makes the sliding mean-square O(n).
    csum = np.concatenate(([0.0], np.cumsum(weighted**2)))
    starts = step * np.arange(n_blocks)
    return (csum[starts + block] - csum[starts]) / block


def integrated_loudness(buffer: AudioBuffer) -> LoudnessResult:
    """BS.1770-4 gated integrated loudness of a single-channel buffer.

    Applies the absolute gate at -70 LUFS, then the relative gate 10 LU
    below the intermediate level. Returns a result with
    ``integrated_lufs = BELOW_GATE`` when no block survives the gates.
    """
    powers = _gating_block_powers(buffer)
    with np.errstate(divide="ignore"):
        block_lufs = _OFFSET_LUFS + 10.0 * np.log10(powers)
    above_absolute = block_lufs > _ABSOLUTE_GATE_LUFS
    if not above_absolute.any():
        return LoudnessResult(BELOW_GATE, 0)
    intermediate = _OFFSET_LUFS + 10.0 * np.log10(np.mean(powers[above_absolute]))
    relative_gate = intermediate + _RELATIVE_GATE_LU
    gated = above_absolute & (block_lufs > relative_gate)
    if not gated.any():
        return LoudnessResult(BELOW_GATE, 0)
    level = _OFFSET_LUFS + 10.0 * np.log10(np.mean(powers[gated]))
    return LoudnessResult(float(level), int(gated.sum()))


def normalize_loudness(
    buffer: AudioBuffer,
    target_lufs: float,
    tolerance_lu: float = 0.2,
    max_iterations: int = 3,
) -> tuple[AudioBuffer, LoudnessResult]:
    """Scale a buffer so its integrated loudness lands on ``target_lufs``.

    Gating can shift after a gain change, so the gain is re-estimated up to
    ``max_iterations`` times until the re-measured loudness is within
    ``tolerance_lu`` of the target. No true-peak limiting is applied;
    samples beyond full scale are kept and logged.
    """
    measured = integrated_loudness(buffer)
    if measured.below_gate:
        raise AllBlocksGated("cannot normalize: no block passed the absolute gate")

    total_gain_db = 0.0
    current = buffer
    result = measured
    for _ in range(max_iterations):
        if abs(result.integrated_lufs - target_lufs) <= tolerance_lu:
            break
        step_db = target_lufs - result.integrated_lufs
        total_gain_db += step_db
        current = buffer.scaled(10.0 ** (total_gain_db / 20.0))
        result = integrated_loudness(current)
        if result.below_gate:
            raise AllBlocksGated("normalization gain pushed all blocks below the gate")

    peak = float(np.max(np.abs(current.samples))) if len(current) else 0.0
    if peak > 1.0:
        log.warning("normalized audio peaks at %.3f (above full scale)", peak)
    return current, LoudnessResult(
        result.integrated_lufs, result.gated_block_count, applied_gain_db=total_gain_db
    )

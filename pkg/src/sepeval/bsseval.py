"""Waveform-domain separation metrics: SI-SDR and FIR-projection SDR/SIR/SAR.

The FIR metrics decompose an estimate by least-squares projection onto the
span of delayed copies of the reference signals (delays 0..filter_length-1).
Projections use zero-padded full convolutions, so the Gram matrix of one
reference is exactly its autocorrelation Toeplitz matrix and can be solved
by Levinson recursion; the joint multi-reference system is block-Toeplitz
and solved densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.linalg import solve_toeplitz, toeplitz
from scipy.signal import fftconvolve

from .audio import AudioBuffer
from .errors import BufferTooShort, LengthMismatch, RateMismatch, SingularSystem, ZeroReference


@dataclass(frozen=True)
class ProjectionConfig:
    """Geometry and numerics of the FIR projection."""

    filter_length: int = 512
    regularization_eps: float = 1e-10
    db_cap: float = 300.0

    def __post_init__(self):
        if self.filter_length < 1:
            raise ValueError(f"filter_length must be >= 1, got {self.filter_length}")
        if self.regularization_eps <= 0:
            raise ValueError("regularization_eps must be positive")


@dataclass(frozen=True)
class BssEvalResult:
    """SDR always present; SIR/SAR only when interference references were given."""

    sdr: float
    sir: float | None = None
    sar: float | None = None


def _check_pair(estimate: AudioBuffer, reference: AudioBuffer) -> None:
    if len(estimate) != len(reference):
        raise LengthMismatch(
            f"estimate has {len(estimate)} samples, reference {len(reference)}"
        )
    if estimate.sample_rate != reference.sample_rate:
        raise RateMismatch("estimate and reference differ in sample rate")


def _db_ratio(numerator: float, denominator: float, cap: float,
              noise_floor_db: float | None = None) -> float:
    """10*log10(num/den) clamped into [-cap, cap].

    The denominator counts as zero (result = cap) once it falls below
    10^(-cap/10) of the numerator, which also absorbs exact-zero residuals.
    ``noise_floor_db`` additionally saturates values the computation cannot
    distinguish from a perfect fit: the diagonal regularization of the FIR
    projections leaves a residual of about ``eps`` relative magnitude even
    for an exact subspace match, so ratios near -20*log10(eps) are floors,
    not measurements, and are reported as the cap sentinel.
    """
    if denominator <= numerator * 10.0 ** (-cap / 10.0):
        return cap
    if numerator == 0.0:
        return -cap
    value = 10.0 * np.log10(numerator / denominator)
    if noise_floor_db is not None and value >= noise_floor_db:
        return cap
    return float(np.clip(value, -cap, cap))


def _regularization_floor_db(config: ProjectionConfig) -> float:
    # 6 dB safety margin below the eps^2 residual floor.
    return min(config.db_cap, -20.0 * np.log10(config.regularization_eps) - 6.0)


def si_sdr(estimate: AudioBuffer, reference: AudioBuffer,
           db_cap: float = 300.0) -> float:
    """Scale-invariant SDR in dB.

    The reference is rescaled by the least-squares gain
    ``alpha = <est, ref> / <ref, ref>`` and the ratio of scaled-reference
    energy to residual energy is returned, capped at ``db_cap``.
    """
    _check_pair(estimate, reference)
    if len(reference) == 0:
        raise LengthMismatch("signals must be non-empty")
    ref = reference.samples
    est = estimate.samples
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ZeroReference("reference signal is all zeros")
    alpha = float(np.dot(est, ref)) / ref_energy
    scaled = alpha * ref
    signal_energy = float(np.dot(scaled, scaled))
    residual = scaled - est
    residual_energy = float(np.dot(residual, residual))
    return _db_ratio(signal_energy, residual_energy, db_cap)


def _correlations(signals: list[np.ndarray], estimate: np.ndarray, n_lags: int):
    """FFT cross-correlations needed by the normal equations.

    Returns ``corr[i][j][d] = sum_n s_i[n] * s_j[n+d]`` for d in
    [0, n_lags) and ``cross[i][a] = sum_n est[n] * s_i[n-a]``.
    """
    n = len(estimate)
    nfft = next_fast_len(n + n_lags)
    spectra = [np.fft.rfft(s, nfft) for s in signals]
    est_f = np.fft.rfft(estimate, nfft)
    corr = []
    for fi in spectra:
        row = []
        for fj in spectra:
            row.append(np.fft.irfft(np.conj(fi) * fj, nfft)[:n_lags])
        corr.append(row)
    cross = [np.fft.irfft(np.conj(fi) * est_f, nfft)[:n_lags] for fi in spectra]
    return corr, cross


def _single_projection(estimate: np.ndarray, reference: np.ndarray,
                       config: ProjectionConfig) -> np.ndarray:
    """Least-squares FIR fit of the estimate from one reference (full conv)."""
    n_lags = config.filter_length
    corr, cross = _correlations([reference], estimate, n_lags)
    acf = corr[0][0]
    reg = config.regularization_eps * acf[0]
    first = acf.copy()
    first[0] += reg
    try:
        h = solve_toeplitz((first, first), cross[0])
    except np.linalg.LinAlgError:
        dense = toeplitz(first)
        h, *_ = np.linalg.lstsq(dense, cross[0], rcond=None)
    if not np.isfinite(h).all():
        raise SingularSystem("projection filter is not finite")
    return fftconvolve(h, reference)


def _joint_projection(estimate: np.ndarray, references: list[np.ndarray],
                      config: ProjectionConfig) -> np.ndarray:
    """Least-squares FIR fit from the joint span of several references."""
    n_lags = config.filter_length
    n_refs = len(references)
    corr, cross = _correlations(references, estimate, n_lags)
    size = n_refs * n_lags
    gram = np.empty((size, size))
    for i in range(n_refs):
        for j in range(n_refs):
            # Block [a, b] = corr_ij(a - b); column from corr_ij, row from corr_ji.
            block = toeplitz(corr[i][j], corr[j][i])
            gram[i * n_lags : (i + 1) * n_lags, j * n_lags : (j + 1) * n_lags] = block
    reg = config.regularization_eps * np.trace(gram) / size
    gram[np.diag_indices(size)] += reg
    rhs = np.concatenate(cross)
    try:
        h = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("joint projection system is singular") from exc
    if not np.isfinite(h).all():
        raise SingularSystem("joint projection filter is not finite")
    out = np.zeros(len(estimate) + n_lags - 1)
    for i, ref in enumerate(references):
        out += fftconvolve(h[i * n_lags : (i + 1) * n_lags], ref)
    return out


def _pad_to(x: np.ndarray, length: int) -> np.ndarray:
    return np.pad(x, (0, length - len(x)))


def sdr_fir(estimate: AudioBuffer, reference: AudioBuffer,
            config: ProjectionConfig = ProjectionConfig()) -> float:
    """SDR in dB after projecting the estimate onto FIR filterings of the reference.

    The projection minimizes ``||est - h * ref||^2`` over filters ``h`` of
    ``config.filter_length`` taps (normal equations with a small diagonal
    regularization, solved by Levinson recursion).
    """
    _check_pair(estimate, reference)
    if len(reference) <= config.filter_length:
        raise BufferTooShort(
            f"need more than filter_length={config.filter_length} samples"
        )
    ref = reference.samples
    est = estimate.samples
    if not np.any(ref):
        raise ZeroReference("reference signal is all zeros")
    s_target = _single_projection(est, ref, config)
    est_full = _pad_to(est, len(s_target))
    distortion = est_full - s_target
    return _db_ratio(
        float(np.dot(s_target, s_target)),
        float(np.dot(distortion, distortion)),
        config.db_cap,
        noise_floor_db=_regularization_floor_db(config),
    )


def bss_eval_sources(
    estimate: AudioBuffer,
    target_ref: AudioBuffer,
    interference_refs: list[AudioBuffer] = (),
    config: ProjectionConfig = ProjectionConfig(),
) -> BssEvalResult:
    """Decompose an estimate into target, interference, and artifact parts.

    ``s_target`` is the projection onto FIR filterings of the target
    reference; the joint projection onto target plus interference references
    splits the remainder into ``e_interf`` (inside the joint span) and
    ``e_artif`` (outside). Ratios are returned in dB, capped at
    ``config.db_cap``. Without interference references only SDR is defined.
    """
    _check_pair(estimate, target_ref)
    for ref in interference_refs:
        _check_pair(estimate, ref)
    if len(target_ref) <= config.filter_length:
        raise BufferTooShort(
            f"need more than filter_length={config.filter_length} samples"
        )
    if not np.any(target_ref.samples):
        raise ZeroReference("target reference is all zeros")

    est = estimate.samples
    p_target = _single_projection(est, target_ref.samples, config)
    est_full = _pad_to(est, len(p_target))
    floor = _regularization_floor_db(config)
    if not interference_refs:
        distortion = est_full - p_target
        sdr = _db_ratio(
            float(np.dot(p_target, p_target)),
            float(np.dot(distortion, distortion)),
            config.db_cap,
            noise_floor_db=floor,
        )
        return BssEvalResult(sdr=sdr)

    refs = [target_ref.samples] + [r.samples for r in interference_refs]
    p_all = _joint_projection(est, refs, config)
    e_interf = p_all - p_target
    e_artif = est_full - p_all

    target_energy = float(np.dot(p_target, p_target))
    sdr = _db_ratio(
        target_energy, float(np.sum((e_interf + e_artif) ** 2)), config.db_cap,
        noise_floor_db=floor,
    )
    sir = _db_ratio(target_energy, float(np.dot(e_interf, e_interf)), config.db_cap,
                    noise_floor_db=floor)
    sar = _db_ratio(
        float(np.dot(p_all, p_all)), float(np.dot(e_artif, e_artif)), config.db_cap,
        noise_floor_db=floor,
    )
    return BssEvalResult(sdr=sdr, sir=sir, sar=sar)

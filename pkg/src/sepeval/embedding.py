"""Embedding-space intrusive metrics and the EMB1 container format.

A separated/reference pair is compared either through the Fréchet distance
between Gaussians fitted to each side's time-resolved embedding frames
(order-free) or through the time-aligned mean squared error (order-aware).

EMB1 file layout (little-endian)::

    magic "EMB1" | u32 version=1 | u32 T | u32 D | u32 dtype (0=float32)
    | u16 len + UTF-8 encoder_id | f32 frame_rate | T*D float32, frame-major
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    DimensionOverflow,
    EncoderMismatch,
    NonFiniteInput,
    TooFewFrames,
    TruncatedPayload,
)

_MAGIC = b"EMB1"
_VERSION = 1
_DTYPE_FLOAT32 = 0
_MAX_ELEMENTS = 1 << 31


@dataclass(frozen=True)
class EmbeddingSequence:
    """T x D matrix of encoder frames with provenance metadata."""

    frames: np.ndarray
    encoder_id: str
    frame_rate: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"expected non-empty T x D frames, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise NonFiniteInput("embedding frames contain NaN or infinity")
        object.__setattr__(self, "frames", frames)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def dimension(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class GaussianStats:
    """Sufficient statistics of one embedding sequence."""

    mean: np.ndarray
    covariance: np.ndarray
    frame_count: int


def write_embeddings(seq: EmbeddingSequence, path) -> None:
    """Serialize a sequence as an EMB1 file (payload stored as float32)."""
    encoder_bytes = seq.encoder_id.encode("utf-8")
    if len(encoder_bytes) > 0xFFFF:
        raise DimensionOverflow("encoder_id longer than 65535 bytes")
    t, d = seq.frames.shape
    if t * d > _MAX_ELEMENTS:
        raise DimensionOverflow(f"{t}x{d} payload exceeds the format limit")
    header = struct.pack("<4sIIII", _MAGIC, _VERSION, t, d, _DTYPE_FLOAT32)
    header += struct.pack("<H", len(encoder_bytes)) + encoder_bytes
    header += struct.pack("<f", seq.frame_rate)
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_embeddings(path) -> EmbeddingSequence:
    """Parse an EMB1 file; the float32 payload round-trips bit-exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != _MAGIC:
        raise BadMagic(f"{path}: not an EMB1 file")
    if len(raw) < 20:
        raise TruncatedPayload(f"{path}: header truncated")
    _, version, t, d, dtype_code = struct.unpack_from("<4sIIII", raw)
    if version != _VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    if dtype_code != _DTYPE_FLOAT32:
        raise BadMagic(f"{path}: unsupported dtype code {dtype_code}")
    if t < 1 or d < 1 or t * d > _MAX_ELEMENTS:
        raise DimensionOverflow(f"{path}: implausible dimensions {t}x{d}")
    pos = 20
    if len(raw) < pos + 2:
        raise TruncatedPayload(f"{path}: header truncated")
    (id_len,) = struct.unpack_from("<H", raw, pos)
    pos += 2
    if len(raw) < pos + id_len + 4:
        raise TruncatedPayload(f"{path}: header truncated")
    encoder_id = raw[pos : pos + id_len].decode("utf-8")
    pos += id_len
    (frame_rate,) = struct.unpack_from("<f", raw, pos)
    pos += 4
    expected = t * d * 4
    if len(raw) - pos < expected:
        raise TruncatedPayload(
            f"{path}: payload holds {len(raw) - pos} bytes, expected {expected}"
        )
    frames = np.frombuffer(raw, dtype="<f4", count=t * d, offset=pos).reshape(t, d)
    return EmbeddingSequence(frames=frames, encoder_id=encoder_id, frame_rate=frame_rate)


def fit_gaussian(seq: EmbeddingSequence, ridge: float = 0.0) -> GaussianStats:
    """Mean and unbiased sample covariance (divisor T-1), plus ridge*I."""
    if seq.frame_count < 2:
        raise TooFewFrames(f"need at least 2 frames, got {seq.frame_count}")
    frames = seq.frames.astype(np.float64, copy=False)
    mean = frames.mean(axis=0)
    centered = frames - mean
    cov = centered.T @ centered / (seq.frame_count - 1)
    cov = (cov + cov.T) / 2.0
    if ridge:
        cov = cov + ridge * np.eye(seq.dimension)
    return GaussianStats(mean=mean, covariance=cov, frame_count=seq.frame_count)


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative eigenvalues are clamped to zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.isfinite(matrix).all():
        raise NonFiniteInput("matrix contains NaN or infinity")
    sym = (matrix + matrix.T) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(sym)
    root = np.sqrt(np.clip(eigenvalues, 0.0, None))
    result = (eigenvectors * root) @ eigenvectors.T
    return (result + result.T) / 2.0


def frechet_gaussian_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared Fréchet distance between two Gaussians.

    The cross term uses the symmetric reformulation
    ``trace(sqrt(S @ cov_b @ S))`` with ``S = sqrt(cov_a)``, which stays in
    PSD territory where plain ``sqrt(cov_a @ cov_b)`` can go complex.
    """
    if a.mean.shape != b.mean.shape:
        raise DimensionMismatch(
            f"dimension {a.mean.shape[0]} vs {b.mean.shape[0]}"
        )
    mean_diff = a.mean - b.mean
    s = psd_sqrt(a.covariance)
    cross = psd_sqrt(s @ b.covariance @ s)
    trace_term = (
        float(np.trace(a.covariance))
        + float(np.trace(b.covariance))
        - 2.0 * float(np.trace(cross))
    )
    return max(0.0, float(mean_diff @ mean_diff) + trace_term)


def _auto_ridge(stats: GaussianStats, scale: float = 1e-6) -> float:
    return scale * float(np.trace(stats.covariance)) / stats.covariance.shape[0]


def _check_compatible(ref: EmbeddingSequence, est: EmbeddingSequence) -> None:
    if ref.encoder_id != est.encoder_id:
        raise EncoderMismatch(f"{ref.encoder_id!r} vs {est.encoder_id!r}")
    if ref.dimension != est.dimension:
        raise DimensionMismatch(f"{ref.dimension} vs {est.dimension}")


def fad_song2song(
    ref: EmbeddingSequence,
    est: EmbeddingSequence,
    ridge: float | None = None,
) -> float:
    """Fréchet distance between Gaussians fitted to one reference/estimate pair.

    ``ridge=None`` adds ``1e-6 * trace(cov)/D`` to each covariance, which
    keeps short sequences (T < D) numerically solid; pass an explicit value
    (0 included) to override.
    """
    _check_compatible(ref, est)
    ref_stats = fit_gaussian(ref)
    est_stats = fit_gaussian(est)
    if ridge is None:
        ref_ridge = _auto_ridge(ref_stats)
        est_ridge = _auto_ridge(est_stats)
    else:
        ref_ridge = est_ridge = ridge
    eye = np.eye(ref.dimension)
    ref_stats = GaussianStats(
        ref_stats.mean, ref_stats.covariance + ref_ridge * eye, ref_stats.frame_count
    )
    est_stats = GaussianStats(
        est_stats.mean, est_stats.covariance + est_ridge * eye, est_stats.frame_count
    )
    return frechet_gaussian_distance(ref_stats, est_stats)


def embedding_mse(ref: EmbeddingSequence, est: EmbeddingSequence) -> float:
    """Time-aligned mean squared error over min(T_ref, T_est) frames."""
    _check_compatible(ref, est)
    t_min = min(ref.frame_count, est.frame_count)
    if abs(ref.frame_count - est.frame_count) > 1:
        warnings.warn(
            f"frame counts differ by {abs(ref.frame_count - est.frame_count)}; "
            f"truncating both to {t_min}",
            stacklevel=2,
        )
    a = ref.frames[:t_min].astype(np.float64, copy=False)
    b = est.frames[:t_min].astype(np.float64, copy=False)
    return float(np.mean((a - b) ** 2))

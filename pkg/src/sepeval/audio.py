"""Audio ingestion, mixdown, excerpt selection, STFT, and A-weighting.

All metric modules consume the types defined here: :class:`AudioBuffer` is
the single-channel signal carrier, :class:`Spectrogram` the complex STFT
matrix produced by :func:`stft`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BufferTooShort,
    CorruptHeader,
    EmptyBuffer,
    EmptyFile,
    LengthMismatch,
    NoQualifyingExcerpt,
    RateMismatch,
    UnsupportedEncoding,
)

#: Maximum random draws before select_excerpt gives up.
MAX_EXCERPT_DRAWS = 10000

_PCM16_SCALE = 32768.0
_PCM24_SCALE = 8388608.0


@dataclass(frozen=True)
class AudioBuffer:
    """Single-channel sample sequence with its sample rate.

    Samples are float64 at nominal full scale 1.0 and must be finite.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected 1-D samples, got shape {samples.shape}")
        if samples.size and not np.isfinite(samples).all():
            raise ValueError("samples contain NaN or infinity")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    """Analysis geometry for :func:`stft`."""

    fft_size: int
    hop_size: int
    window: str = "hann"
    center_padding: bool = True

    def __post_init__(self):
        if self.fft_size < 2:
            raise ValueError(f"fft_size must be >= 2, got {self.fft_size}")
        if not 0 < self.hop_size <= self.fft_size:
            raise ValueError(
                f"hop_size must satisfy 0 < hop <= fft_size, got {self.hop_size}"
            )
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT: ``bins[m, k]`` is frame ``m``, bin ``k``."""

    bins: np.ndarray
    config: StftConfig
    sample_rate: int

    def __post_init__(self):
        if self.bins.ndim != 2:
            raise ValueError(f"expected 2-D bins, got shape {self.bins.shape}")
        frames, nbins = self.bins.shape
        if frames < 1:
            raise ValueError("spectrogram must hold at least one frame")
        if nbins != self.config.fft_size // 2 + 1:
            raise ValueError(
                f"bin count {nbins} inconsistent with fft_size {self.config.fft_size}"
            )

    @property
    def frame_count(self) -> int:
        return self.bins.shape[0]

    @property
    def bin_count(self) -> int:
        return self.bins.shape[1]

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.bins)


# --- WAV i/o ---------------------------------------------------------------

def load_wav(path) -> list[AudioBuffer]:
    """Read a RIFF/WAVE file into one AudioBuffer per channel.

    Supports PCM16, PCM24 and IEEE-float32 encodings. Integer samples are
    scaled to nominal full scale 1.0 (PCM16 by 1/32768, PCM24 by 1/8388608).
    No mixdown is applied; use :func:`mixdown_mono` for that.

    Raises
    ------
    EmptyFile
        Zero-byte file or a data chunk with no frames.
    CorruptHeader
        Truncated or structurally invalid RIFF/WAVE container.
    UnsupportedEncoding
        Any encoding other than the three above.
    """
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise EmptyFile(f"{path}: file is empty")
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise CorruptHeader(f"{path}: chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise CorruptHeader(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise CorruptHeader(f"{path}: fmt chunk too short")

    audio_format, channels, sample_rate, _, block_align, bits = struct.unpack_from(
        "<HHIIHH", fmt
    )
    if audio_format == 0xFFFE:
        # WAVE_FORMAT_EXTENSIBLE: actual format code leads the SubFormat GUID.
        if len(fmt) < 40:
            raise CorruptHeader(f"{path}: extensible fmt chunk too short")
        (audio_format,) = struct.unpack_from("<H", fmt, 24)

    if channels < 1 or sample_rate < 1 or block_align < 1:
        raise CorruptHeader(f"{path}: invalid fmt fields")

    if audio_format == 1 and bits == 16:
        frames = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = frames.astype(np.float64) / _PCM16_SCALE
    elif audio_format == 1 and bits == 24:
        usable = len(data) - len(data) % 3
        triplets = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
        ints = (
            triplets[:, 0].astype(np.int32)
            | (triplets[:, 1].astype(np.int32) << 8)
            | (triplets[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints.astype(np.float64) / _PCM24_SCALE
    elif audio_format == 3 and bits == 32:
        frames = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = frames.astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"{path}: format code {audio_format} with {bits} bits is not supported"
        )

    if samples.size == 0:
        raise EmptyFile(f"{path}: data chunk holds no frames")
    if samples.size % channels:
        samples = samples[: samples.size - samples.size % channels]
    deinterleaved = samples.reshape(-1, channels)
    return [AudioBuffer(deinterleaved[:, c], sample_rate) for c in range(channels)]


def write_wav(path, channels: list[AudioBuffer] | AudioBuffer, encoding: str = "float32") -> None:
    """Write one or more equal-length channels as a RIFF/WAVE file.

    ``encoding`` is one of ``float32`` (default, lossless for pipeline
    audio), ``pcm16`` or ``pcm24``. Integer encodings round and clip.
    """
    if isinstance(channels, AudioBuffer):
        channels = [channels]
    if not channels:
        raise EmptyBuffer("no channels to write")
    rate = channels[0].sample_rate
    length = len(channels[0])
    for ch in channels[1:]:
        if ch.sample_rate != rate:
            raise RateMismatch("channels differ in sample rate")
        if len(ch) != length:
            raise LengthMismatch("channels differ in length")

    interleaved = np.stack([c.samples for c in channels], axis=1).reshape(-1)
    if encoding == "float32":
        payload = interleaved.astype("<f4").tobytes()
        fmt_code, bits = 3, 32
    elif encoding == "pcm16":
        ints = np.clip(np.rint(interleaved * _PCM16_SCALE), -32768, 32767)
        payload = ints.astype("<i2").tobytes()
        fmt_code, bits = 1, 16
    elif encoding == "pcm24":
        ints = np.clip(
            np.rint(interleaved * _PCM24_SCALE), -_PCM24_SCALE, _PCM24_SCALE - 1
        ).astype(np.int64)
        ints = np.where(ints < 0, ints + (1 << 24), ints).astype(np.uint32)
        stacked = np.empty((ints.size, 3), dtype=np.uint8)
        stacked[:, 0] = ints & 0xFF
        stacked[:, 1] = (ints >> 8) & 0xFF
        stacked[:, 2] = (ints >> 16) & 0xFF
        payload = stacked.tobytes()
        fmt_code, bits = 1, 24
    else:
        raise UnsupportedEncoding(f"unknown encoding {encoding!r}")

    n_channels = len(channels)
    block_align = n_channels * bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt_code, n_channels, rate, rate * block_align, block_align, bits
    )
    body = b"WAVE"
    body += b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


# --- sample-domain operations ----------------------------------------------

def mixdown_mono(channels: list[AudioBuffer]) -> AudioBuffer:
    """Arithmetic mean across channels, per sample."""
    if not channels:
        raise EmptyBuffer("no channels to mix")
    rate = channels[0].sample_rate
    length = len(channels[0])
    for ch in channels[1:]:
        if len(ch) != length:
            raise LengthMismatch("channels differ in length")
        if ch.sample_rate != rate:
            raise RateMismatch("channels differ in sample rate")
    mixed = np.mean(np.stack([c.samples for c in channels]), axis=0)
    return AudioBuffer(mixed, rate)


def rms_dbfs(buffer: AudioBuffer) -> float:
    """RMS level in dB re full scale 1.0; ``-inf`` for an all-zero buffer."""
    if len(buffer) == 0:
        raise EmptyBuffer("cannot take RMS of an empty buffer")
    mean_square = float(np.mean(buffer.samples**2))
    if mean_square == 0.0:
        return float("-inf")
    return 10.0 * np.log10(mean_square)


def select_excerpt(
    target: AudioBuffer,
    mixture: AudioBuffer,
    duration_s: float,
    threshold_db: float,
    rng_seed: int,
    max_draws: int = MAX_EXCERPT_DRAWS,
) -> int:
    """Draw random window offsets until the target window's RMS clears a threshold.

    Offsets are drawn uniformly from ``[0, len - duration_samples]`` with a
    ``numpy.random.default_rng(rng_seed)`` generator, so results are
    reproducible per seed. Returns the first qualifying offset.

    Raises
    ------
    NoQualifyingExcerpt
        After ``max_draws`` unsuccessful draws.
    BufferTooShort
        Window longer than the buffers.
    """
    if len(target) != len(mixture):
        raise LengthMismatch("target and mixture differ in length")
    if target.sample_rate != mixture.sample_rate:
        raise RateMismatch("target and mixture differ in sample rate")
    window = int(round(duration_s * target.sample_rate))
    if window < 1 or window > len(target):
        raise BufferTooShort(
            f"window of {window} samples does not fit buffer of {len(target)}"
        )
    rng = np.random.default_rng(rng_seed)
    last = len(target) - window
    for _ in range(max_draws):
        offset = int(rng.integers(0, last + 1))
        segment = AudioBuffer(target.samples[offset : offset + window], target.sample_rate)
        if rms_dbfs(segment) > threshold_db:
            return offset
    raise NoQualifyingExcerpt(
        f"no window above {threshold_db} dB after {max_draws} draws"
    )


# --- STFT and weighting ------------------------------------------------------

def hann_window(size: int) -> np.ndarray:
    """Periodic Hann window (peaks at 1.0 for even sizes)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(size) / size)


def stft(buffer: AudioBuffer, config: StftConfig) -> Spectrogram:
    """Hann-windowed one-sided STFT.

    Frame ``m`` covers samples ``[m*hop, m*hop + fft_size)`` of the
    (optionally padded) signal. With ``center_padding`` the signal is
    reflect-padded by ``fft_size // 2`` on both ends, so frame ``m`` is
    centered on sample ``m*hop`` of the original signal.
    """
    x = buffer.samples
    fft_size, hop = config.fft_size, config.hop_size
    if config.center_padding:
        if len(x) < 2:
            raise BufferTooShort("centered STFT needs at least 2 samples")
        x = np.pad(x, fft_size // 2, mode="reflect")
    elif len(x) < fft_size:
        raise BufferTooShort(
            f"buffer of {len(x)} samples shorter than fft_size {fft_size}"
        )
    n_frames = 1 + (len(x) - fft_size) // hop
    idx = hop * np.arange(n_frames)[:, None] + np.arange(fft_size)[None, :]
    frames = x[idx] * hann_window(fft_size)
    return Spectrogram(
        bins=np.fft.rfft(frames, axis=1), config=config, sample_rate=buffer.sample_rate
    )


def a_weighting_magnitude(freq_hz) -> np.ndarray:
    """IEC 61672 analog A-weighting magnitude, normalized to 1.0 at 1 kHz."""
    f2 = np.square(np.asarray(freq_hz, dtype=np.float64))
    def response(f_sq):
        num = (12194.0**2) * f_sq**2
        den = (
            (f_sq + 20.6**2)
            * np.sqrt((f_sq + 107.7**2) * (f_sq + 737.9**2))
            * (f_sq + 12194.0**2)
        )
        return num / den
    return response(f2) / response(np.float64(1000.0**2))


def a_weighting_gains(config: StftConfig, sample_rate: int) -> np.ndarray:
    """Per-bin A-weighting gains at bin centers ``k * sample_rate / fft_size``."""
    if sample_rate <= 0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    freqs = np.arange(config.fft_size // 2 + 1) * (sample_rate / config.fft_size)
    return a_weighting_magnitude(freqs)

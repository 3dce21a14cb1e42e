"""Minimal WAV decoding: PCM16/PCM24/float32 to mono float64."""

import struct
from pathlib import Path

import numpy as np


class AudioDecodeError(Exception):
    pass


def load_wav_mono(path):
    """Returns (samples, sample_rate); multichannel input is averaged."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioDecodeError(f"{path}: not a RIFF/WAVE file")
    fmt = data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise AudioDecodeError(f"{path}: truncated chunk {chunk_id!r}")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None or len(fmt) < 16:
        raise AudioDecodeError(f"{path}: missing fmt/data chunk")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from(
        "<HHIIHH", fmt
    )
    if audio_format == 0xFFFE and len(fmt) >= 26:
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2")
        samples = samples.astype(np.float64) / 32768.0
    elif audio_format == 1 and bits == 24:
        usable = len(data) - len(data) % 3
        triplets = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
        ints = (
            triplets[:, 0].astype(np.int32)
            | (triplets[:, 1].astype(np.int32) << 8)
            | (triplets[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints.astype(np.float64) / 8388608.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4")
        samples = samples.astype(np.float64)
    else:
        raise AudioDecodeError(
            f"{path}: unsupported encoding (format {audio_format}, {bits} bits)"
        )
    if samples.size == 0:
        raise AudioDecodeError(f"{path}: no audio frames")
    if channels > 1:
        samples = samples[: samples.size // channels * channels]
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, sample_rate

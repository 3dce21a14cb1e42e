"""EMB1 container writer.

Layout (little-endian): magic "EMB1", u32 version=1, u32 T, u32 D,
u32 dtype code (0 = float32), u16 encoder_id length + UTF-8 encoder_id,
f32 frame_rate, then T*D float32 values frame-major.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
VERSION = 1
DTYPE_FLOAT32 = 0


def write_emb1(path, frames: np.ndarray, encoder_id: str,
               frame_rate: float) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be non-empty T x D, got {frames.shape}")
    encoder_bytes = encoder_id.encode("utf-8")
    if len(encoder_bytes) > 0xFFFF:
        raise ValueError("encoder_id too long")
    t, d = frames.shape
    header = struct.pack("<4sIIII", MAGIC, VERSION, t, d, DTYPE_FLOAT32)
    header += struct.pack("<H", len(encoder_bytes)) + encoder_bytes
    header += struct.pack("<f", frame_rate)
    Path(path).write_bytes(header + frames.tobytes())

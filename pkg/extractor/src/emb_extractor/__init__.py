"""Per-frame audio embedding extraction to EMB1 files."""

from .encoders import (
    ENCODER_NAMES,
    MODEL_MANIFEST,
    ExtractorConfig,
    ModelUnavailable,
    encode,
    extract,
    stub_encode,
)
from .stub_mel import log_mel_frames, mel_filterbank

__version__ = "0.1.0"

__all__ = [
    "ENCODER_NAMES",
    "MODEL_MANIFEST",
    "ExtractorConfig",
    "ModelUnavailable",
    "encode",
    "extract",
    "log_mel_frames",
    "mel_filterbank",
    "stub_encode",
]

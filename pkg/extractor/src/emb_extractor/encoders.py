"""Encoder registry: pretrained SSL wrappers plus the CI stub.

Pretrained encoders are loaded lazily; missing packages or unreachable
weights surface as :class:`ModelUnavailable` so pipelines can fall back or
fail cleanly. Model revisions are pinned in :data:`MODEL_MANIFEST`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .audio_io import load_wav_mono
from .emb1 import write_emb1
from .stub_mel import frame_rate as stub_frame_rate
from .stub_mel import log_mel_frames

CACHE_ENV_VAR = "EMB_EXTRACTOR_CACHE"

#: Pinned upstream checkpoints per encoder name.
MODEL_MANIFEST = {
    "mert-l12": {"repo": "m-a-p/MERT-v1-95M", "revision": "main",
                 "sample_rate": 24000, "dims": 768},
    "clap-audio": {"repo": "laion/larger_clap_general", "revision": "main",
                   "sample_rate": 48000, "dims": 512},
    "clap-music": {"repo": "laion/larger_clap_music", "revision": "main",
                   "sample_rate": 48000, "dims": 512},
    "music2latent": {"repo": "music2latent (pypi)", "revision": ">=0.1",
                     "sample_rate": 44100, "dims": 64},
    "stub-mel": {"repo": "builtin", "revision": "1", "sample_rate": 0,
                 "dims": 64},
}

ENCODER_NAMES = tuple(MODEL_MANIFEST)

# CLAP produces one embedding per fixed-length chunk.
_CLAP_CHUNK_SECONDS = 10.0


class ModelUnavailable(Exception):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    encoder: str = "stub-mel"
    device: str = "cpu"

    def __post_init__(self):
        if self.encoder not in ENCODER_NAMES:
            raise ModelUnavailable(
                f"unknown encoder {self.encoder!r}; "
                f"known: {', '.join(ENCODER_NAMES)}"
            )

    @property
    def target_sample_rate(self) -> int:
        return MODEL_MANIFEST[self.encoder]["sample_rate"]


def _apply_cache_env() -> None:
    cache = os.environ.get(CACHE_ENV_VAR)
    if cache:
        os.environ.setdefault("HF_HOME", cache)
        os.environ.setdefault("TORCH_HOME", cache)


def _resample(samples: np.ndarray, from_rate: int, to_rate: int) -> np.ndarray:
    if from_rate == to_rate:
        return samples
    from math import gcd

    divisor = gcd(from_rate, to_rate)
    return resample_poly(samples, to_rate // divisor, from_rate // divisor)


def _encode_mert_l12(samples: np.ndarray, sample_rate: int, device: str):
    _apply_cache_env()
    try:
        import torch
        from transformers import AutoModel
    except ImportError as exc:
        raise ModelUnavailable(f"mert-l12 needs torch+transformers: {exc}") from exc
    spec = MODEL_MANIFEST["mert-l12"]
    try:
        model = AutoModel.from_pretrained(
            spec["repo"], revision=spec["revision"], trust_remote_code=True
        )
    except Exception as exc:
        raise ModelUnavailable(f"cannot load {spec['repo']}: {exc}") from exc
    model.eval().to(device)
    audio = _resample(samples, sample_rate, spec["sample_rate"])
    with torch.no_grad():
        inputs = torch.as_tensor(audio, dtype=torch.float32,
                                 device=device).unsqueeze(0)
        outputs = model(inputs, output_hidden_states=True)
    frames = outputs.hidden_states[12].squeeze(0).cpu().numpy()
    return frames, 75.0


def _encode_clap(samples: np.ndarray, sample_rate: int, device: str, name: str):
    _apply_cache_env()
    try:
        import torch
        from transformers import ClapModel, ClapProcessor
    except ImportError as exc:
        raise ModelUnavailable(f"{name} needs torch+transformers: {exc}") from exc
    spec = MODEL_MANIFEST[name]
    try:
        model = ClapModel.from_pretrained(spec["repo"], revision=spec["revision"])
        processor = ClapProcessor.from_pretrained(
            spec["repo"], revision=spec["revision"]
        )
    except Exception as exc:
        raise ModelUnavailable(f"cannot load {spec['repo']}: {exc}") from exc
    model.eval().to(device)
    audio = _resample(samples, sample_rate, spec["sample_rate"])
    chunk = int(_CLAP_CHUNK_SECONDS * spec["sample_rate"])
    pieces = [audio[i : i + chunk] for i in range(0, len(audio), chunk)] or [audio]
    rows = []
    with torch.no_grad():
        for piece in pieces:
            inputs = processor(
                audios=piece, sampling_rate=spec["sample_rate"],
                return_tensors="pt",
            ).to(device)
            rows.append(model.get_audio_features(**inputs).squeeze(0).cpu().numpy())
    return np.stack(rows), 1.0 / _CLAP_CHUNK_SECONDS


def _encode_music2latent(samples: np.ndarray, sample_rate: int, device: str):
    _apply_cache_env()
    try:
        from music2latent import EncoderDecoder
    except ImportError as exc:
        raise ModelUnavailable(f"music2latent package missing: {exc}") from exc
    spec = MODEL_MANIFEST["music2latent"]
    audio = _resample(samples, sample_rate, spec["sample_rate"])
    codec = EncoderDecoder(device=device)
    latents = codec.encode(audio.astype(np.float32))  # (1, dims, T)
    frames = np.asarray(latents.squeeze(0).T.cpu() if hasattr(latents, "cpu")
                        else latents.squeeze(0).T)
    return frames, frames.shape[0] / (len(audio) / spec["sample_rate"])


def encode(samples: np.ndarray, sample_rate: int,
           config: ExtractorConfig) -> tuple[np.ndarray, float]:
    """Run one encoder over a mono signal; returns (frames, frame_rate)."""
    if config.encoder == "stub-mel":
        return log_mel_frames(samples, sample_rate), stub_frame_rate(sample_rate)
    if config.encoder == "mert-l12":
        return _encode_mert_l12(samples, sample_rate, config.device)
    if config.encoder in ("clap-audio", "clap-music"):
        return _encode_clap(samples, sample_rate, config.device, config.encoder)
    if config.encoder == "music2latent":
        return _encode_music2latent(samples, sample_rate, config.device)
    raise ModelUnavailable(f"unknown encoder {config.encoder!r}")


def extract(audio_path, output_path, config: ExtractorConfig) -> None:
    """Decode audio, run the configured encoder, write an EMB1 file."""
    samples, sample_rate = load_wav_mono(audio_path)
    frames, rate = encode(samples, sample_rate, config)
    write_emb1(output_path, frames, config.encoder, rate)


def stub_encode(audio_path, output_path) -> None:
    """Shortcut for the deterministic CI encoder."""
    extract(audio_path, output_path, ExtractorConfig(encoder="stub-mel"))

"""Quality evaluation suite for singing-voice separation.

Intrusive objective metrics (waveform-ratio, spectral, embedding-based),
a DCR listening-study service producing DMOS, and rank-correlation
analysis between the two.
"""

from .audio import (
    AudioBuffer,
    Spectrogram,
    StftConfig,
    a_weighting_gains,
    load_wav,
    mixdown_mono,
    rms_dbfs,
    select_excerpt,
    stft,
    write_wav,
)
from .bsseval import BssEvalResult, ProjectionConfig, bss_eval_sources, sdr_fir, si_sdr
from .embedding import (
    EmbeddingSequence,
    embedding_mse,
    fad_song2song,
    read_embeddings,
    write_embeddings,
)
from .loudness import LoudnessResult, integrated_loudness, normalize_loudness
from .spectral import LossBreakdown, MrStftConfig, mr_stft_loss, stft_loss_single
from .study import (
    DmosSummary,
    RatingRecord,
    StimulusPair,
    StudyConfig,
    bootstrap_median_ci,
    build_groups,
    compute_dmos,
    screen_participant,
)
from .correlation import MetricTable, TradeoffRow, average_ranks, srcc, tradeoff_table

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BssEvalResult",
    "DmosSummary",
    "EmbeddingSequence",
    "LossBreakdown",
    "LoudnessResult",
    "MetricTable",
    "MrStftConfig",
    "ProjectionConfig",
    "RatingRecord",
    "Spectrogram",
    "StftConfig",
    "StimulusPair",
    "StudyConfig",
    "TradeoffRow",
    "a_weighting_gains",
    "average_ranks",
    "bootstrap_median_ci",
    "bss_eval_sources",
    "build_groups",
    "compute_dmos",
    "embedding_mse",
    "fad_song2song",
    "integrated_loudness",
    "load_wav",
    "mixdown_mono",
    "mr_stft_loss",
    "normalize_loudness",
    "read_embeddings",
    "rms_dbfs",
    "screen_participant",
    "sdr_fir",
    "select_excerpt",
    "si_sdr",
    "srcc",
    "stft",
    "stft_loss_single",
    "tradeoff_table",
    "write_embeddings",
    "write_wav",
]

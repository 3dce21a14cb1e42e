"""Degradation Category Rating study core.

Covers stimulus grouping with gold-standard insertion, participant
screening on gold ratings, DMOS aggregation, and bootstrap confidence
intervals for the median. All state mutation lives in the HTTP service;
everything here is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NotEnoughGoldCandidates, UnratedStimulus

#: Five-point DCR scale, best to worst.
DCR_SCALE = (
    (5, "degradation is inaudible"),
    (4, "degradation is audible but not annoying"),
    (3, "degradation is slightly annoying"),
    (2, "degradation is annoying"),
    (1, "degradation is very annoying"),
)

GOLD_LABEL = "GOLD"
GOLD_TYPE = "gold"

#: Model labels with a fixed model type.
KNOWN_LABEL_TYPES = {
    "HTDemucs": "discriminative",
    "MelRoFo(L)": "discriminative",
    "MelRoFo(S)": "discriminative",
    "MelRoFo(S)+BigVGAN": "generative",
    "SGMSVS": "generative",
    GOLD_LABEL: GOLD_TYPE,
}

#: A participant is excluded once more than this many gold ratings fall below 4.
MAX_LOW_GOLD_RATINGS = 3


@dataclass(frozen=True)
class StimulusPair:
    id: str
    reference_path: str
    test_path: str
    model_label: str
    model_type: str

    def __post_init__(self):
        if self.model_type not in ("discriminative", "generative", GOLD_TYPE):
            raise ValueError(f"unknown model_type {self.model_type!r}")
        expected = KNOWN_LABEL_TYPES.get(self.model_label)
        if expected is not None and expected != self.model_type:
            raise ValueError(
                f"label {self.model_label!r} implies model_type {expected!r}, "
                f"got {self.model_type!r}"
            )
        if self.model_type == GOLD_TYPE and self.reference_path != self.test_path:
            raise ValueError("gold pairs must reference the same file twice")

    @property
    def is_gold(self) -> bool:
        return self.model_type == GOLD_TYPE


@dataclass(frozen=True)
class StudyConfig:
    stimuli: tuple[StimulusPair, ...]
    group_count: int = 3
    gold_per_group: int = 5
    ratings_per_stimulus_target: int = 12
    rng_seed: int = 0
    scale: tuple = DCR_SCALE

    def __post_init__(self):
        if not self.stimuli:
            raise ValueError("study needs at least one stimulus")
        if self.group_count < 1:
            raise ValueError("group_count must be >= 1")
        if self.gold_per_group < 0:
            raise ValueError("gold_per_group must be >= 0")
        if len(self.scale) != 5:
            raise ValueError("the rating scale has exactly five points")
        ids = [s.id for s in self.stimuli]
        if len(set(ids)) != len(ids):
            raise ValueError("stimulus ids must be unique")
        if any(s.is_gold for s in self.stimuli):
            raise ValueError("gold pairs are generated by build_groups, not supplied")


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    stimulus_id: str
    rating: int
    timestamp: str
    group_id: int

    def __post_init__(self):
        if self.rating not in (1, 2, 3, 4, 5):
            raise ValueError(f"rating must be 1..5, got {self.rating}")


@dataclass(frozen=True)
class DmosSummary:
    stimulus_id: str
    dmos: float
    n: int
    median: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class GroupAssignment:
    """Per-group stimulus lists: shuffled test items plus appended gold pairs."""

    groups: tuple[tuple[StimulusPair, ...], ...]

    def gold_ids(self) -> frozenset[str]:
        return frozenset(
            s.id for group in self.groups for s in group if s.is_gold
        )


def build_groups(config: StudyConfig) -> GroupAssignment:
    """Randomly partition stimuli into groups and append gold pairs.

    The shuffle and all draws come from one generator seeded with
    ``config.rng_seed``, so the assignment is reproducible. Group sizes
    differ by at most one; gold references are drawn without replacement
    across all groups so no participant hears a gold reference twice.
    """
    rng = np.random.default_rng(config.rng_seed)
    order = rng.permutation(len(config.stimuli))
    shuffled = [config.stimuli[i] for i in order]

    base, extra = divmod(len(shuffled), config.group_count)
    groups: list[list[StimulusPair]] = []
    cursor = 0
    for g in range(config.group_count):
        size = base + (1 if g < extra else 0)
        groups.append(shuffled[cursor : cursor + size])
        cursor += size

    needed = config.group_count * config.gold_per_group
    references = sorted({s.reference_path for s in config.stimuli})
    if needed > len(references):
        raise NotEnoughGoldCandidates(
            f"need {needed} distinct references for gold pairs, have {len(references)}"
        )
    drawn = [references[i] for i in rng.permutation(len(references))[:needed]]
    for g in range(config.group_count):
        for k in range(config.gold_per_group):
            ref = drawn[g * config.gold_per_group + k]
            groups[g].append(
                StimulusPair(
                    id=f"gold-{g}-{k}",
                    reference_path=ref,
                    test_path=ref,
                    model_label=GOLD_LABEL,
                    model_type=GOLD_TYPE,
                )
            )
    return GroupAssignment(groups=tuple(tuple(g) for g in groups))


def screen_participant(gold_ratings: list[int]) -> bool:
    """True when the participant is retained.

    Exclusion rule: strictly more than :data:`MAX_LOW_GOLD_RATINGS` gold
    ratings below 4.
    """
    low = sum(1 for r in gold_ratings if r < 4)
    return low <= MAX_LOW_GOLD_RATINGS


def bootstrap_median_ci(
    values,
    resamples: int = 10000,
    confidence: float = 0.95,
    rng_seed=0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the sample median.

    Resampling scheme: ``resamples`` rows of ``n`` indices drawn with
    replacement from ``default_rng(rng_seed)`` in one call, row medians via
    ``np.median``, interval endpoints via ``np.quantile`` at
    ``(1-confidence)/2`` and ``1-(1-confidence)/2``. ``rng_seed`` may also
    be a ``numpy.random.Generator``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("cannot bootstrap an empty sample")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0.0 <= confidence < 1.0:
        raise ValueError("confidence must be in [0, 1)")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    medians = np.median(values[idx], axis=1)
    half_alpha = (1.0 - confidence) / 2.0
    return (
        float(np.quantile(medians, half_alpha)),
        float(np.quantile(medians, 1.0 - half_alpha)),
    )


def compute_dmos(
    records: list[RatingRecord],
    retained_participants,
    gold_ids=frozenset(),
    resamples: int = 10000,
    confidence: float = 0.95,
    rng_seed: int = 0,
) -> list[DmosSummary]:
    """Per-stimulus mean rating over retained participants.

    Gold pairs are dropped from the output; a non-gold stimulus present in
    ``records`` with no retained rating raises :class:`UnratedStimulus`.
    Summaries are sorted by stimulus id, each with the bootstrap CI of its
    median (seeds spawned deterministically from ``rng_seed``).
    """
    retained = set(retained_participants)
    gold_ids = set(gold_ids)
    by_stimulus: dict[str, list[int]] = {}
    seen: set[str] = set()
    for record in records:
        if record.stimulus_id in gold_ids:
            continue
        seen.add(record.stimulus_id)
        if record.participant_id in retained:
            by_stimulus.setdefault(record.stimulus_id, []).append(record.rating)

    unrated = seen - set(by_stimulus)
    if unrated:
        raise UnratedStimulus(
            f"no retained rating for: {', '.join(sorted(unrated))}"
        )

    out = []
    seeds = np.random.SeedSequence(rng_seed).spawn(len(by_stimulus))
    for seed, stimulus_id in zip(seeds, sorted(by_stimulus)):
        ratings = by_stimulus[stimulus_id]
        ci_low, ci_high = bootstrap_median_ci(
            ratings,
            resamples=resamples,
            confidence=confidence,
            rng_seed=np.random.default_rng(seed),
        )
        out.append(
            DmosSummary(
                stimulus_id=stimulus_id,
                dmos=float(np.mean(ratings)),
                n=len(ratings),
                median=float(np.median(ratings)),
                ci_low=ci_low,
                ci_high=ci_high,
            )
        )
    return out


RATINGS_CSV_HEADER = [
    "stimulus_id",
    "model_label",
    "model_type",
    "participant_id",
    "rating",
    "timestamp",
    "group_id",
]


def ratings_to_csv(
    records: list[RatingRecord],
    pairs_by_id: dict[str, StimulusPair],
    retained_flags: dict[str, bool] | None = None,
) -> str:
    """RFC 4180 CSV of rating records; optionally appends a retained column."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = list(RATINGS_CSV_HEADER)
    if retained_flags is not None:
        header.append("retained")
    writer.writerow(header)
    for record in records:
        pair = pairs_by_id[record.stimulus_id]
        row = [
            record.stimulus_id,
            pair.model_label,
            pair.model_type,
            record.participant_id,
            record.rating,
            record.timestamp,
            record.group_id,
        ]
        if retained_flags is not None:
            row.append(str(retained_flags.get(record.participant_id, True)).lower())
        writer.writerow(row)
    return buffer.getvalue()


def parse_ratings_csv(text: str) -> tuple[list[RatingRecord], dict[str, StimulusPair]]:
    """Inverse of :func:`ratings_to_csv` (extra columns are ignored)."""
    reader = csv.DictReader(io.StringIO(text))
    records = []
    pairs: dict[str, StimulusPair] = {}
    for row in reader:
        records.append(
            RatingRecord(
                participant_id=row["participant_id"],
                stimulus_id=row["stimulus_id"],
                rating=int(row["rating"]),
                timestamp=row["timestamp"],
                group_id=int(row["group_id"]),
            )
        )
        if row["stimulus_id"] not in pairs:
            label = row["model_label"]
            pairs[row["stimulus_id"]] = StimulusPair(
                id=row["stimulus_id"],
                reference_path="",
                test_path="",
                model_label=label,
                model_type=row["model_type"],
            )
    return records, pairs

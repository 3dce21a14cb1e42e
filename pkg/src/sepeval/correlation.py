"""Rank statistics joining per-stimulus metrics with DMOS.

Spearman coefficients are computed separately for the discriminative and
generative model subsets; metrics where lower is better are sign-flipped so
every coefficient reads "higher = better agreement with listeners".
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    LengthMismatch,
    MissingSubset,
    NonFiniteValue,
    TooFewPoints,
)

MODEL_TYPES = ("discriminative", "generative")

#: Direction conventions for the metrics this suite produces.
HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"


@dataclass(frozen=True)
class MetricRow:
    stimulus_id: str
    model_label: str
    model_type: str
    dmos: float
    metrics: dict[str, float]

    def __post_init__(self):
        if self.model_type not in MODEL_TYPES:
            raise ValueError(
                f"model_type must be one of {MODEL_TYPES}, got {self.model_type!r}"
            )


@dataclass(frozen=True)
class MetricTable:
    rows: tuple[MetricRow, ...]
    metric_directions: dict[str, str]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("metric table is empty")
        names = set(self.rows[0].metrics)
        for row in self.rows:
            if set(row.metrics) != names:
                raise ValueError(
                    f"row {row.stimulus_id} has metric set {sorted(row.metrics)}, "
                    f"expected {sorted(names)}"
                )
        for name in names:
            direction = self.metric_directions.get(name)
            if direction not in (HIGHER_BETTER, LOWER_BETTER):
                raise ValueError(f"no direction for metric {name!r}")

    @property
    def metric_names(self) -> list[str]:
        return sorted(self.rows[0].metrics)


@dataclass(frozen=True)
class TradeoffRow:
    metric_name: str
    srcc_disc: float | None
    srcc_gen: float | None
    intrusive: bool = True
    embedding_based: bool = False


def average_ranks(values) -> np.ndarray:
    """Ascending ranks 1..n; tied values share the mean of their ranks."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot rank an empty sequence")
    if not np.isfinite(values).all():
        raise NonFiniteValue("values must be finite to rank")
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        # positions i..j (0-based) share ranks i+1..j+1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srcc(x, y) -> float | None:
    """Spearman rank correlation: Pearson correlation of average ranks.

    Returns ``None`` (the undefined sentinel) when either rank vector is
    constant; reporting 0 there would silently corrupt trade-off plots.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise LengthMismatch(f"{x.size} vs {y.size} points")
    if x.size < 3:
        raise TooFewPoints(f"need at least 3 points, got {x.size}")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0.0:
        return None
    return float(np.dot(rx, ry) / denom)


def is_embedding_metric(name: str) -> bool:
    return name.startswith("fad:") or name.startswith("mse:")


def default_direction(name: str) -> str:
    """Direction convention by metric name: losses and distances point down."""
    if name in ("mrstft",) or is_embedding_metric(name):
        return LOWER_BETTER
    return HIGHER_BETTER


def tradeoff_table(table: MetricTable) -> list[TradeoffRow]:
    """Per-metric SRCC against DMOS for each model-type subset.

    Coefficients of lower-is-better metrics are multiplied by -1 so all
    rows share one orientation.
    """
    subsets = {}
    for model_type in MODEL_TYPES:
        rows = [r for r in table.rows if r.model_type == model_type]
        if not rows:
            raise MissingSubset(f"no rows with model_type {model_type!r}")
        subsets[model_type] = rows

    out = []
    for name in table.metric_names:
        flip = -1.0 if table.metric_directions[name] == LOWER_BETTER else 1.0
        coefficients = {}
        for model_type, rows in subsets.items():
            value = srcc([r.metrics[name] for r in rows], [r.dmos for r in rows])
            coefficients[model_type] = None if value is None else flip * value
        out.append(
            TradeoffRow(
                metric_name=name,
                srcc_disc=coefficients["discriminative"],
                srcc_gen=coefficients["generative"],
                intrusive=True,
                embedding_based=is_embedding_metric(name),
            )
        )
    return out


# --- interchange ------------------------------------------------------------

def read_metric_table(csv_path, directions: dict[str, str]) -> MetricTable:
    """Load `stimulus_id,model_label,model_type,dmos,<metrics...>` CSV.

    Metric columns missing from ``directions`` fall back to
    :func:`default_direction`.
    """
    with open(csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fixed = ["stimulus_id", "model_label", "model_type", "dmos"]
        if reader.fieldnames is None or reader.fieldnames[: len(fixed)] != fixed:
            raise ValueError(
                f"{csv_path}: header must start with {','.join(fixed)}"
            )
        metric_names = [c for c in reader.fieldnames if c not in fixed]
        rows = []
        for record in reader:
            rows.append(
                MetricRow(
                    stimulus_id=record["stimulus_id"],
                    model_label=record["model_label"],
                    model_type=record["model_type"],
                    dmos=float(record["dmos"]),
                    metrics={name: float(record[name]) for name in metric_names},
                )
            )
    resolved = {
        name: directions.get(name, default_direction(name)) for name in metric_names
    }
    return MetricTable(rows=tuple(rows), metric_directions=resolved)


def read_directions_manifest(path) -> dict[str, str]:
    """Sidecar JSON mapping metric name to direction (string or object form)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for name, value in data.items():
        direction = value if isinstance(value, str) else value.get("direction")
        if direction not in (HIGHER_BETTER, LOWER_BETTER):
            raise ValueError(f"bad direction {direction!r} for metric {name!r}")
        out[name] = direction
    return out


def tradeoff_rows_to_csv(rows: list[TradeoffRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["metric_name", "srcc_disc", "srcc_gen", "intrusive", "embedding_based"])
    for row in rows:
        writer.writerow([
            row.metric_name,
            "" if row.srcc_disc is None else repr(row.srcc_disc),
            "" if row.srcc_gen is None else repr(row.srcc_gen),
            str(row.intrusive).lower(),
            str(row.embedding_based).lower(),
        ])
    return buffer.getvalue()


def tradeoff_rows_to_json(rows: list[TradeoffRow]) -> str:
    return json.dumps(
        [
            {
                "metric_name": r.metric_name,
                "srcc_disc": r.srcc_disc,
                "srcc_gen": r.srcc_gen,
                "intrusive": r.intrusive,
                "embedding_based": r.embedding_based,
            }
            for r in rows
        ],
        indent=2,
    )


def tradeoff_scatter_svg(rows: list[TradeoffRow], path) -> None:
    """Scatter of srcc_disc vs srcc_gen with one annotated marker per metric."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 6))
    for row in rows:
        if row.srcc_disc is None or row.srcc_gen is None:
            continue
        marker = "*" if row.embedding_based else "o"
        ax.scatter(row.srcc_disc, row.srcc_gen, marker=marker, s=60)
        ax.annotate(
            row.metric_name,
            (row.srcc_disc, row.srcc_gen),
            textcoords="offset points",
            xytext=(5, 5),
            fontsize=8,
        )
    ax.set_xlabel("SRCC (discriminative subset)")
    ax.set_ylabel("SRCC (generative subset)")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)

"""Command-line pipeline: prepare stimuli, compute metrics, aggregate
ratings, correlate with DMOS, serve listening studies, cut excerpts.

Every failure exits non-zero with one machine-readable JSON object on
stderr; exit code 2 marks usage errors, 1 runtime failures. Output CSVs
use shortest round-trip float formatting and sorted row order, so repeated
runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import correlation, study
from .audio import AudioBuffer, load_wav, mixdown_mono, select_excerpt, write_wav
from .bsseval import ProjectionConfig, bss_eval_sources, sdr_fir, si_sdr
from .embedding import embedding_mse, fad_song2song, read_embeddings
from .errors import SepevalError
from .loudness import normalize_loudness
from .spectral import MrStftConfig, mr_stft_loss

WAVEFORM_METRICS = ("si-sdr", "sdr", "sir", "sar", "mrstft")


class UsageError(Exception):
    pass


class JsonArgumentParser(argparse.ArgumentParser):
    """argparse that reports its own failures as error JSON too."""

    def error(self, message):
        _emit_error("UsageError", message)
        raise SystemExit(2)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"type": kind, "message": message}}),
          file=sys.stderr)


def _fmt(value: float) -> str:
    return repr(float(value))


# --- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    stimulus_id: str
    reference: str
    estimate: str
    model_label: str
    model_type: str
    mixture: str = ""
    interference: str = ""
    embeddings: dict[str, tuple[str, str]] = None  # encoder -> (ref, est)


def read_manifest(path) -> list[ManifestRow]:
    """CSV manifest: stimulus_id,reference,estimate,model_label,model_type
    plus optional mixture / interference / emb_ref:<enc> / emb_est:<enc>."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"stimulus_id", "reference", "estimate", "model_label",
                    "model_type"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or ()))
            raise UsageError(f"manifest misses columns: {', '.join(missing)}")
        emb_ref_cols = {
            c.split(":", 1)[1]: c
            for c in reader.fieldnames if c.startswith("emb_ref:")
        }
        emb_est_cols = {
            c.split(":", 1)[1]: c
            for c in reader.fieldnames if c.startswith("emb_est:")
        }
        for record in reader:
            if not record["model_label"]:
                raise UsageError(
                    f"empty model_label for stimulus {record['stimulus_id']!r}"
                )
            embeddings = {}
            for encoder in emb_ref_cols:
                ref_path = record.get(emb_ref_cols[encoder], "")
                est_path = record.get(emb_est_cols.get(encoder, ""), "")
                if ref_path or est_path:
                    embeddings[encoder] = (ref_path, est_path)
            rows.append(
                ManifestRow(
                    stimulus_id=record["stimulus_id"],
                    reference=record["reference"],
                    estimate=record["estimate"],
                    model_label=record["model_label"],
                    model_type=record["model_type"],
                    mixture=record.get("mixture", "") or "",
                    interference=record.get("interference", "") or "",
                    embeddings=embeddings,
                )
            )
    if not rows:
        raise UsageError("manifest holds no rows")
    return rows


def _load_mono(path) -> AudioBuffer:
    return mixdown_mono(load_wav(path))


# --- subcommands ----------------------------------------------------------------

def cmd_prepare(args) -> int:
    rows = read_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = []
    prepared = [["stimulus_id", "reference", "estimate", "model_label",
                 "model_type"]]
    for row in rows:
        entry = {"stimulus_id": row.stimulus_id}
        outputs = {}
        for role, source in (("reference", row.reference),
                             ("test", row.estimate)):
            mono = _load_mono(source)
            normalized, result = normalize_loudness(mono, args.target_lufs)
            destination = out_dir / f"{row.stimulus_id}_{role}.wav"
            write_wav(destination, normalized, encoding="float32")
            outputs[role] = destination
            entry[f"{role}_gain_db"] = result.applied_gain_db
            entry[f"{role}_lufs"] = result.integrated_lufs
        report.append(entry)
        prepared.append([row.stimulus_id, str(outputs["reference"]),
                         str(outputs["test"]), row.model_label, row.model_type])
    manifest_out = out_dir / "prepared_manifest.csv"
    with open(manifest_out, "w", newline="", encoding="utf-8") as handle:
        csv.writer(handle, lineterminator="\n").writerows(prepared)
    print(json.dumps({"target_lufs": args.target_lufs, "stimuli": report},
                     indent=2))
    return 0


def _parse_metric_names(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise UsageError("no metrics requested")
    for name in names:
        base = name.split(":", 1)[0]
        if name in WAVEFORM_METRICS:
            continue
        if base in ("fad", "mse") and ":" in name and name.split(":", 1)[1]:
            continue
        raise UsageError(f"unknown metric {name!r}")
    return names


def _interference_for(row: ManifestRow, reference: AudioBuffer) -> AudioBuffer:
    if row.interference:
        return _load_mono(row.interference)
    if row.mixture:
        mixture = _load_mono(row.mixture)
        if len(mixture) != len(reference):
            raise SepevalError(
                f"{row.stimulus_id}: mixture and reference differ in length"
            )
        return AudioBuffer(mixture.samples - reference.samples,
                           reference.sample_rate)
    raise UsageError(
        f"{row.stimulus_id}: sir/sar need an interference or mixture column"
    )


def _metrics_for_row(row: ManifestRow, names: list[str],
                     projection: ProjectionConfig,
                     mrstft_config: MrStftConfig) -> dict[str, float]:
    reference = _load_mono(row.reference)
    estimate = _load_mono(row.estimate)
    values: dict[str, float] = {}
    if "si-sdr" in names:
        values["si-sdr"] = si_sdr(estimate, reference, db_cap=projection.db_cap)
    if "sdr" in names:
        values["sdr"] = sdr_fir(estimate, reference, projection)
    if "sir" in names or "sar" in names:
        interference = _interference_for(row, reference)
        result = bss_eval_sources(estimate, reference, [interference], projection)
        if "sir" in names:
            values["sir"] = result.sir
        if "sar" in names:
            values["sar"] = result.sar
    if "mrstft" in names:
        values["mrstft"] = mr_stft_loss(estimate, reference, mrstft_config).total
    for name in names:
        if ":" not in name:
            continue
        kind, encoder = name.split(":", 1)
        if encoder not in (row.embeddings or {}):
            raise SepevalError(
                f"{row.stimulus_id}: manifest has no embedding files for "
                f"encoder {encoder!r}"
            )
        ref_path, est_path = row.embeddings[encoder]
        if not ref_path or not est_path:
            raise SepevalError(
                f"{row.stimulus_id}: incomplete embedding pair for {encoder!r}"
            )
        ref_seq = read_embeddings(ref_path)
        est_seq = read_embeddings(est_path)
        if kind == "fad":
            values[name] = fad_song2song(ref_seq, est_seq)
        else:
            values[name] = embedding_mse(ref_seq, est_seq)
    return values


def cmd_metrics(args) -> int:
    names = _parse_metric_names(args.metrics)
    rows = read_manifest(args.manifest)
    projection = ProjectionConfig(filter_length=args.filter_length)
    mrstft_config = MrStftConfig()
    dmos_by_id = {}
    if args.dmos:
        payload = json.loads(Path(args.dmos).read_text(encoding="utf-8"))
        summaries = payload["summaries"] if isinstance(payload, dict) else payload
        dmos_by_id = {s["stimulus_id"]: s["dmos"] for s in summaries}

    def work(row: ManifestRow):
        return row.stimulus_id, _metrics_for_row(row, names, projection,
                                                 mrstft_config)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            computed = dict(pool.map(work, rows))
    else:
        computed = dict(work(row) for row in rows)

    header = ["stimulus_id", "model_label", "model_type"]
    if dmos_by_id:
        header.append("dmos")
    header.extend(names)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in sorted(rows, key=lambda r: r.stimulus_id):
        values = computed[row.stimulus_id]
        line = [row.stimulus_id, row.model_label, row.model_type]
        if dmos_by_id:
            line.append(_fmt(dmos_by_id[row.stimulus_id]))
        line.extend(_fmt(values[name]) for name in names)
        writer.writerow(line)
    text = buffer.getvalue()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_dmos(args) -> int:
    text = Path(args.ratings).read_text(encoding="utf-8")
    records, pairs = study.parse_ratings_csv(text)
    if args.gold.startswith("@"):
        gold_ids = set(
            Path(args.gold[1:]).read_text(encoding="utf-8").split()
        )
    else:
        gold_ids = {g for g in args.gold.split(",") if g}
    gold_ratings: dict[str, list[int]] = {}
    participants = set()
    for record in records:
        participants.add(record.participant_id)
        if record.stimulus_id in gold_ids:
            gold_ratings.setdefault(record.participant_id, []).append(
                record.rating
            )
    screening = {
        participant: study.screen_participant(gold_ratings.get(participant, []))
        for participant in sorted(participants)
    }
    retained = {p for p, keep in screening.items() if keep}
    summaries = study.compute_dmos(
        [r for r in records if r.participant_id in retained],
        retained,
        gold_ids=gold_ids,
        rng_seed=args.seed,
    )
    output = {
        "screening": screening,
        "summaries": [
            {
                "stimulus_id": s.stimulus_id,
                "dmos": s.dmos,
                "n": s.n,
                "median": s.median,
                "ci_low": s.ci_low,
                "ci_high": s.ci_high,
            }
            for s in summaries
        ],
    }
    text = json.dumps(output, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_correlate(args) -> int:
    directions = {}
    if args.directions:
        directions = correlation.read_directions_manifest(args.directions)
    table = correlation.read_metric_table(args.table, directions)
    rows = correlation.tradeoff_table(table)
    if args.out_csv:
        Path(args.out_csv).write_text(
            correlation.tradeoff_rows_to_csv(rows), encoding="utf-8"
        )
    if args.out_svg:
        correlation.tradeoff_scatter_svg(rows, args.out_svg)
    text = correlation.tradeoff_rows_to_json(rows)
    if args.out_json:
        Path(args.out_json).write_text(text, encoding="utf-8")
    if not (args.out_csv or args.out_json or args.out_svg):
        print(text)
    return 0


def cmd_serve(args) -> int:
    from .service import parse_service_config, run_service

    run_service(parse_service_config(args.config))
    return 0


def cmd_excerpt(args) -> int:
    target = _load_mono(args.target)
    mixture = _load_mono(args.mixture)
    offset = select_excerpt(target, mixture, args.seconds, args.threshold,
                            rng_seed=args.seed)
    window = int(round(args.seconds * target.sample_rate))
    result = {
        "offset": offset,
        "offset_seconds": offset / target.sample_rate,
        "window_samples": window,
    }
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        cut_target = AudioBuffer(
            target.samples[offset : offset + window], target.sample_rate
        )
        cut_mixture = AudioBuffer(
            mixture.samples[offset : offset + window], mixture.sample_rate
        )
        write_wav(out_dir / "target_excerpt.wav", cut_target)
        write_wav(out_dir / "mixture_excerpt.wav", cut_mixture)
        result["target_excerpt"] = str(out_dir / "target_excerpt.wav")
        result["mixture_excerpt"] = str(out_dir / "mixture_excerpt.wav")
    print(json.dumps(result, indent=2))
    return 0


def build_parser() -> JsonArgumentParser:
    parser = JsonArgumentParser(prog="sepeval")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="mixdown and loudness-normalize stimuli")
    p.add_argument("--in", dest="manifest", required=True)
    p.add_argument("--target-lufs", type=float, default=-18.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("metrics", help="compute a metric table from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", required=True,
                   help="comma list, e.g. si-sdr,sdr,mrstft,fad:stub-mel")
    p.add_argument("--out")
    p.add_argument("--dmos", help="DmosSummary JSON to join as a dmos column")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--filter-length", type=int, default=512)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dmos", help="screen participants and aggregate DMOS")
    p.add_argument("--ratings", required=True)
    p.add_argument("--gold", required=True,
                   help="comma list of gold stimulus ids, or @file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dmos)

    p = sub.add_parser("correlate", help="SRCC trade-off table from a metric CSV")
    p.add_argument("--table", required=True)
    p.add_argument("--directions")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.add_argument("--out-svg")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("serve", help="run the listening-study service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("excerpt", help="select a qualifying random excerpt")
    p.add_argument("--target", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--seconds", type=float, default=5.0)
    p.add_argument("--threshold", type=float, default=-30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_excerpt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        _emit_error("UsageError", str(exc))
        return 2
    except SepevalError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    except FileNotFoundError as exc:
        _emit_error("FileNotFound", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
